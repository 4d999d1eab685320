//! Parsing of `--alphas` values: either `min:max:step` or a comma list.

pub fn parse_alphas(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, step] = parts.as_slice() else {
            return Err(format!("expected min:max:step, got {s:?}"));
        };
        let (min, max, step) = (number(min)?, number(max)?, number(step)?);
        if step <= 0.0 {
            return Err(format!("step must be positive, got {step}"));
        }
        if min > max {
            return Err(format!("invalid range: {min} > {max}"));
        }
        // Integer stepping avoids drift; the end point is kept when the
        // range is a whole number of steps up to rounding.
        let n = ((max - min) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| round(min + i as f64 * step)).collect())
    } else {
        s.split(',').map(|p| number(p).map(round)).collect()
    }
}

fn number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("not a number: {s:?}"))
}

fn round(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}
