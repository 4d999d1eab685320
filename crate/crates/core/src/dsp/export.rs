//! Feature dumps: a plain-text format (one config header line, one line per
//! frame) and JSON.

use std::fmt::Write as _;
use std::io::Write;

use super::{DspError, FeatureConfig, MelSpectrogram};

pub fn write_feature_text(mel: &MelSpectrogram, out: &mut impl Write) -> std::io::Result<()> {
    let c = &mel.config;
    writeln!(
        out,
        "# n_mels={} window_ms={} hop_ms={} fft_size={} sample_rate={} frames={} source_id={}",
        c.n_mels,
        c.window_ms,
        c.hop_ms,
        c.fft_size,
        c.sample_rate,
        mel.frames.len(),
        mel.source_id.as_deref().unwrap_or("-")
    )?;
    let mut line = String::new();
    for frame in &mel.frames {
        line.clear();
        for (i, v) in frame.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{v:.9e}").unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_feature_json(mel: &MelSpectrogram, out: &mut impl Write) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, mel)?;
    writeln!(out)
}

pub fn parse_feature_text(text: &str) -> Result<MelSpectrogram, DspError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|h| h.strip_prefix("# "))
        .ok_or_else(|| DspError::Parse("missing header line".into()))?;
    let mut n_mels = None;
    let mut window_ms = None;
    let mut hop_ms = None;
    let mut fft_size = None;
    let mut sample_rate = None;
    let mut frames_expected = None;
    let mut source_id = None;
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| DspError::Parse(format!("bad header field {field:?}")))?;
        let bad = |_| DspError::Parse(format!("bad value for {k}: {v:?}"));
        match k {
            "n_mels" => n_mels = Some(v.parse::<usize>().map_err(bad)?),
            "window_ms" => window_ms = Some(v.parse::<f64>().map_err(|_| DspError::Parse(k.into()))?),
            "hop_ms" => hop_ms = Some(v.parse::<f64>().map_err(|_| DspError::Parse(k.into()))?),
            "fft_size" => fft_size = Some(v.parse::<usize>().map_err(bad)?),
            "sample_rate" => sample_rate = Some(v.parse::<u32>().map_err(|_| DspError::Parse(k.into()))?),
            "frames" => frames_expected = Some(v.parse::<usize>().map_err(bad)?),
            "source_id" => source_id = (v != "-").then(|| v.to_string()),
            _ => {}
        }
    }
    let missing = |name: &str| DspError::Parse(format!("header lacks {name}"));
    let config = FeatureConfig {
        n_mels: n_mels.ok_or_else(|| missing("n_mels"))?,
        window_ms: window_ms.ok_or_else(|| missing("window_ms"))?,
        hop_ms: hop_ms.ok_or_else(|| missing("hop_ms"))?,
        fft_size: fft_size.ok_or_else(|| missing("fft_size"))?,
        sample_rate: sample_rate.ok_or_else(|| missing("sample_rate"))?,
    };
    let frames = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let row = l
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| DspError::Parse(format!("bad number {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != config.n_mels {
                return Err(DspError::Parse(format!(
                    "frame has {} values, expected {}",
                    row.len(),
                    config.n_mels
                )));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(n) = frames_expected {
        if n != frames.len() {
            return Err(DspError::Parse(format!("header says {n} frames, found {}", frames.len())));
        }
    }
    Ok(MelSpectrogram {
        frames,
        config,
        source_id,
    })
}
