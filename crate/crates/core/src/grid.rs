//! Plain-text numeric grids shared by tensor dumps and activation maps.
//!
//! ```text
//! # grid <name> channels=<C> height=<H> width=<W>
//! ## channel 0
//! 0.5 1 1 0.5
//! ...
//! ```
//!
//! One line per row, values separated by single spaces, channels in order.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub fn write_grid(name: &str, channels: usize, height: usize, width: usize, data: &[f64]) -> String {
    assert_eq!(data.len(), channels * height * width, "grid data size");
    let mut s = format!("# grid {name} channels={channels} height={height} width={width}\n");
    for c in 0..channels {
        let _ = writeln!(s, "## channel {c}");
        for r in 0..height {
            let row = &data[(c * height + r) * width..(c * height + r + 1) * width];
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn parse_grid(text: &str) -> Result<Grid, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty grid")?;
    let mut parts = header.strip_prefix("# grid ").ok_or("missing grid header")?.split_whitespace();
    let name = parts.next().ok_or("missing grid name")?.to_string();
    let mut dims = [0usize; 3];
    for (slot, key) in dims.iter_mut().zip(["channels=", "height=", "width="]) {
        let p = parts.next().ok_or("short grid header")?;
        *slot = p.strip_prefix(key).ok_or_else(|| format!("expected {key}"))?.parse().map_err(|e| format!("{key} {e}"))?;
    }
    let [channels, height, width] = dims;
    let mut data = Vec::with_capacity(channels * height * width);
    for line in lines {
        if line.starts_with("##") || line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|e| format!("bad cell: {e}"))?;
        if row.len() != width {
            return Err(format!("row has {} cells, expected {width}", row.len()));
        }
        data.extend(row);
    }
    if data.len() != channels * height * width {
        return Err(format!("grid has {} cells, expected {}", data.len(), channels * height * width));
    }
    Ok(Grid { name, channels, height, width, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = vec![0.5, 1.0, 0.0, 0.25, 1.0, 2.0, 3.0, 4.0];
        let text = write_grid("t", 2, 2, 2, &data);
        let g = parse_grid(&text).unwrap();
        assert_eq!((g.channels, g.height, g.width), (2, 2, 2));
        assert_eq!(g.data, data);
    }
}
