//! Cycle-level model of the dual select-line pixel array read-out.
//!
//! Every row carries a Row-Select line wired to its red/blue pixels and a
//! Green-Select line wired to its green pixels. A row pair is read in two
//! cycles: first both Row-Select lines (red and blue land on their own
//! column lines), then both Green-Select lines with the column switch of
//! each column pair closed, so the two greens of a tile share one line.
//! The green pair is halved digitally after conversion.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{check_bit_depth, check_even_dims, max_code, BayerImage, CfaPattern, Channel, RgbImage};
use crate::prng::Prng;

const NOISE_STREAM: u64 = 1;
const GAIN_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub bit_depth: u8,
    pub pattern: CfaPattern,
    /// Pixel voltage that maps onto the top ADC code.
    pub full_well_voltage: f64,
    pub read_noise_sigma: f64,
    pub green_gain_mismatch_sigma: f64,
    pub seed: u64,
}

impl PixelArrayConfig {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bit_depth: crate::image::DEFAULT_BIT_DEPTH,
            pattern: CfaPattern::Rggb,
            full_well_voltage: 1.0,
            read_noise_sigma: 0.0,
            green_gain_mismatch_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_even_dims(self.cols, self.rows)?;
        check_bit_depth(self.bit_depth)?;
        if !(self.full_well_voltage > 0.0 && self.full_well_voltage.is_finite()) {
            return Err(Error::Parameter("full-well voltage must be positive".into()));
        }
        for (name, s) in [
            ("read noise sigma", self.read_noise_sigma),
            ("green gain mismatch sigma", self.green_gain_mismatch_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn is_ideal(&self) -> bool {
        self.read_noise_sigma == 0.0 && self.green_gain_mismatch_sigma == 0.0
    }
}

/// Read-out orderings the simulator can schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutScheme {
    /// Row-Select cycle for red/blue, then Green-Select cycle with the
    /// column switches closed.
    #[default]
    Interleaved,
    /// Comparison baseline: one cycle per CFA site of the tile, four per
    /// row pair.
    SequentialPerColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectLine {
    RowSelect(usize),
    GreenSelect(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Switch {
    Open,
    Closed,
}

/// Line a pixel value is driven onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bus {
    Column(usize),
    /// Both column lines of column pair `p` tied together.
    Joined(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRead {
    pub row: usize,
    pub col: usize,
    pub channel: Channel,
    pub bus: Bus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub index: usize,
    pub lines: Vec<SelectLine>,
    /// Column-switch state for each column pair.
    pub switches: Vec<Switch>,
    pub reads: Vec<PixelRead>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadoutTrace {
    pub rows: usize,
    pub cols: usize,
    pub cycles: Vec<Cycle>,
}

impl ReadoutTrace {
    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }

    /// Number of times each pixel is read, row-major.
    pub fn read_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.rows * self.cols];
        for read in self.cycles.iter().flat_map(|c| &c.reads) {
            counts[read.row * self.cols + read.col] += 1;
        }
        counts
    }
}

impl fmt::Display for ReadoutTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for cycle in &self.cycles {
            write!(f, "cycle {}:", cycle.index)?;
            let rows = |want_green: bool| -> Vec<String> {
                cycle
                    .lines
                    .iter()
                    .filter_map(|l| match (l, want_green) {
                        (SelectLine::RowSelect(r), false) | (SelectLine::GreenSelect(r), true) => {
                            Some(r.to_string())
                        }
                        _ => None,
                    })
                    .collect()
            };
            let row_sel = rows(false);
            let green_sel = rows(true);
            if !row_sel.is_empty() {
                write!(f, " ROWSEL {}", row_sel.join(","))?;
            }
            if !row_sel.is_empty() && !green_sel.is_empty() {
                write!(f, " |")?;
            }
            if !green_sel.is_empty() {
                write!(f, " GREENSEL {}", green_sel.join(","))?;
            }
            let closed = cycle.switches.contains(&Switch::Closed);
            write!(f, " SWITCH={}", if closed { "closed" } else { "open" })?;
            write!(f, " -> reads [")?;
            for (k, r) in cycle.reads.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "({},{},{})", r.row, r.col, r.channel.letter())?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

pub fn build_schedule(config: &PixelArrayConfig) -> Result<ReadoutTrace> {
    build_schedule_with(config, ReadoutScheme::Interleaved)
}

pub fn build_schedule_with(config: &PixelArrayConfig, scheme: ReadoutScheme) -> Result<ReadoutTrace> {
    config.validate()?;
    let pairs = config.cols / 2;
    let pattern = config.pattern;
    let mut cycles = Vec::new();
    let mut push = |lines: Vec<SelectLine>, switch: Switch, reads: Vec<PixelRead>| {
        let index = cycles.len();
        cycles.push(Cycle {
            index,
            lines,
            switches: vec![switch; pairs],
            reads,
        });
    };

    for top in (0..config.rows).step_by(2) {
        let pair_rows = [top, top + 1];
        let sites = |want: &dyn Fn(Channel) -> bool| -> Vec<(usize, usize, Channel)> {
            pair_rows
                .iter()
                .flat_map(|&r| (0..config.cols).map(move |c| (r, c)))
                .map(|(r, c)| (r, c, pattern.color_at(r, c)))
                .filter(|&(_, _, ch)| want(ch))
                .collect()
        };
        match scheme {
            ReadoutScheme::Interleaved => {
                let rb = sites(&|ch| ch != Channel::Green)
                    .into_iter()
                    .map(|(row, col, channel)| PixelRead { row, col, channel, bus: Bus::Column(col) })
                    .collect();
                push(
                    pair_rows.iter().map(|&r| SelectLine::RowSelect(r)).collect(),
                    Switch::Open,
                    rb,
                );
                let greens = sites(&|ch| ch == Channel::Green)
                    .into_iter()
                    .map(|(row, col, channel)| PixelRead { row, col, channel, bus: Bus::Joined(col / 2) })
                    .collect();
                push(
                    pair_rows.iter().map(|&r| SelectLine::GreenSelect(r)).collect(),
                    Switch::Closed,
                    greens,
                );
            }
            ReadoutScheme::SequentialPerColor => {
                // One cycle per tile site: (row parity, col parity).
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let row = top + dr;
                    let channel = pattern.color_at(row, dc);
                    let line = if channel == Channel::Green {
                        SelectLine::GreenSelect(row)
                    } else {
                        SelectLine::RowSelect(row)
                    };
                    let reads = (dc..config.cols)
                        .step_by(2)
                        .map(|col| PixelRead { row, col, channel, bus: Bus::Column(col) })
                        .collect();
                    push(vec![line], Switch::Open, reads);
                }
            }
        }
    }
    Ok(ReadoutTrace {
        rows: config.rows,
        cols: config.cols,
        cycles,
    })
}

/// Column ADC: `clamp(round_half_up(voltage * (2^b - 1)), 0, 2^b - 1)`.
pub fn adc(voltage: f64, bit_depth: u8) -> Result<u16> {
    if voltage.is_nan() {
        return Err(Error::numeric(None, "NaN voltage at ADC input"));
    }
    check_bit_depth(bit_depth)?;
    let max = max_code(bit_depth) as f64;
    Ok((voltage * max + 0.5).floor().clamp(0.0, max) as u16)
}

/// Per-pixel ADC of a voltage frame without any array effects.
pub fn quantize_frame(voltages: &[f64], config: &PixelArrayConfig) -> Result<BayerImage> {
    config.validate()?;
    check_frame(voltages, config)?;
    let codes = voltages
        .iter()
        .map(|&v| adc(v / config.full_well_voltage, config.bit_depth))
        .collect::<Result<Vec<_>>>()?;
    BayerImage::new(config.cols, config.rows, config.bit_depth, config.pattern, codes)
}

fn check_frame(voltages: &[f64], config: &PixelArrayConfig) -> Result<()> {
    if voltages.len() != config.rows * config.cols {
        return Err(Error::Dimension(format!(
            "voltage frame has {} pixels, array is {}x{}",
            voltages.len(),
            config.rows,
            config.cols
        )));
    }
    Ok(())
}

/// Runs the interleaved schedule over a voltage frame (row-major,
/// `rows × cols`) and returns the demosaiced `(rows/2) × (cols/2)` image.
///
/// Read noise is additive Gaussian on each pixel voltage. Green gain
/// mismatch is a per-pixel multiplicative gain `1 + N(0, sigma)`. Both are
/// drawn from generators keyed by pixel coordinate, so results do not
/// depend on evaluation order.
pub fn simulate_readout(voltages: &[f64], config: &PixelArrayConfig) -> Result<RgbImage> {
    let trace = build_schedule(config)?;
    check_frame(voltages, config)?;
    let (w, h) = (config.cols / 2, config.rows / 2);
    let mut planes = [vec![0u16; w * h], vec![0u16; w * h], vec![0u16; w * h]];
    let mut green_sums = vec![0u32; w * h];
    let ideal = config.is_ideal();

    for cycle in &trace.cycles {
        for read in &cycle.reads {
            let (r, c) = (read.row, read.col);
            let mut v = voltages[r * config.cols + c] / config.full_well_voltage;
            if !ideal {
                if read.channel == Channel::Green {
                    v *= green_gain(config, r, c);
                }
                v += read_noise(config, r, c);
            }
            let code = adc(v, config.bit_depth)?;
            let tile = (r / 2) * w + c / 2;
            match (read.channel, read.bus) {
                (Channel::Green, Bus::Joined(_)) => green_sums[tile] += code as u32,
                (Channel::Green, Bus::Column(_)) => {
                    return Err(Error::Parameter(
                        "green read without a closed column switch".into(),
                    ))
                }
                (ch, _) => planes[ch.index()][tile] = code,
            }
        }
    }
    for (g, sum) in planes[1].iter_mut().zip(&green_sums) {
        *g = (sum >> 1) as u16;
    }
    RgbImage::from_codes(w, h, config.bit_depth, planes)
}

fn read_noise(config: &PixelArrayConfig, row: usize, col: usize) -> f64 {
    if config.read_noise_sigma == 0.0 {
        return 0.0;
    }
    Prng::derive(config.seed, &[NOISE_STREAM, row as u64, col as u64])
        .next_gaussian(config.read_noise_sigma)
}

fn green_gain(config: &PixelArrayConfig, row: usize, col: usize) -> f64 {
    if config.green_gain_mismatch_sigma == 0.0 {
        return 1.0;
    }
    1.0 + Prng::derive(config.seed, &[GAIN_STREAM, row as u64, col as u64])
        .next_gaussian(config.green_gain_mismatch_sigma)
}

/// Read-out cycles per frame relative to one cycle per row.
pub fn frame_rate_overhead(config: &PixelArrayConfig, scheme: ReadoutScheme) -> Result<f64> {
    let trace = build_schedule_with(config, scheme)?;
    Ok(trace.cycle_count() as f64 / config.rows as f64)
}
