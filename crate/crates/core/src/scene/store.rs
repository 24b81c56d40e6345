//! Rendered examples on disk: one directory per example holding `y.wav`,
//! `x.wav`, `v.wav`, `s.wav` (32-bit float) and a `meta.json` sidecar.

use std::fs;
use std::path::Path;

use super::{ArrayGeometry, ExampleMetadata, MixtureExample};
use crate::error::{invalid, Error, Result};
use crate::signal::{read_wav, write_wav, MultichannelWaveform, SampleFormat, Waveform};

pub const META_FILE: &str = "meta.json";

pub fn save_example(dir: &Path, example: &MixtureExample, geom: &ArrayGeometry) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_wav(dir.join("y.wav"), &example.y, SampleFormat::Float32)?;
    write_wav(dir.join("x.wav"), &example.x, SampleFormat::Float32)?;
    write_wav(dir.join("v.wav"), &example.v, SampleFormat::Float32)?;
    let s = MultichannelWaveform::new(vec![example.s.samples.clone()])?;
    write_wav(dir.join("s.wav"), &s, SampleFormat::Float32)?;
    let meta = serde_json::to_vec_pretty(&example.metadata(geom))?;
    let path = dir.join(META_FILE);
    fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

pub fn load_example(dir: &Path) -> Result<MixtureExample> {
    let path = dir.join(META_FILE);
    let meta: ExampleMetadata = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    let y = read_wav(dir.join("y.wav"))?;
    let x = read_wav(dir.join("x.wav"))?;
    let v = read_wav(dir.join("v.wav"))?;
    let mut s = read_wav(dir.join("s.wav"))?;
    if s.num_channels() != 1 {
        return Err(invalid!("{} must be mono", dir.join("s.wav").display()));
    }
    let s = Waveform::new(s.channels.remove(0));
    if [y.len(), x.len(), v.len(), s.len()].iter().any(|n| *n != meta.num_samples) {
        return Err(invalid!("signals in {} do not match the sidecar length", dir.display()));
    }
    Ok(MixtureExample {
        y,
        x,
        v,
        s,
        snr_db: meta.snr_db,
        talker_pos: meta.talker_pos,
        noise_pos: meta.noise_pos,
        seed: meta.seed,
    })
}
