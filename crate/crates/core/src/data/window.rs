use super::scaler::ScaledRecord;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// The `len` consecutive scaled samples ending at `end`, borrowed from its record.
///
/// Windows never contain padding: the first window of a record ends at
/// index `len − 1`.
#[derive(Debug, Clone, Copy)]
pub struct WindowSample<'a> {
    record: &'a ScaledRecord,
    end: usize,
    len: usize,
}

impl<'a> WindowSample<'a> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of the first sample in the source record.
    pub fn start(&self) -> usize {
        self.end + 1 - self.len
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Row-major `len×3` view into the record.
    pub fn rows(&self) -> &'a [f64] {
        &self.record.features.data()[self.start() * 3..(self.end + 1) * 3]
    }

    pub fn window(&self) -> Matrix {
        Matrix::from_vec(self.len, 3, self.rows().to_vec()).expect("window slice is len×3")
    }

    /// Newest sample of the window.
    pub fn latest(&self) -> [f64; 3] {
        let r = self.record.features.row(self.end);
        [r[0], r[1], r[2]]
    }

    pub fn target_soc(&self) -> f64 {
        self.record.soc[self.end]
    }

    /// `(cycle name, end index)`.
    pub fn source(&self) -> (&'a str, usize) {
        (&self.record.cycle_name, self.end)
    }

    /// Source sample index of window row `row`.
    pub fn source_index(&self, row: usize) -> usize {
        self.start() + row
    }
}

fn window_ends(len: usize, window: usize, stride: usize) -> Result<impl Iterator<Item = usize>> {
    if window == 0 || stride == 0 {
        return Err(Error::Parameter(format!("window length ({window}) and stride ({stride}) must be positive")));
    }
    if len < window {
        return Err(Error::InsufficientData(format!("record of {len} samples is shorter than the window length {window}")));
    }
    Ok((window - 1..len).step_by(stride))
}

/// Windows ending at `L−1, L−1+stride, …`; there are `⌊(T−L)/stride⌋+1` of them.
pub fn make_windows(record: &ScaledRecord, window: usize, stride: usize) -> Result<Vec<WindowSample<'_>>> {
    Ok(window_ends(record.len(), window, stride)?
        .map(|end| WindowSample { record, end, len: window })
        .collect())
}

/// Windows drawn from several scaled records, addressed by a flat index.
#[derive(Debug, Clone)]
pub struct WindowDataset {
    records: Vec<ScaledRecord>,
    index: Vec<(u32, u32)>,
    window: usize,
}

impl WindowDataset {
    pub fn new(records: Vec<ScaledRecord>, window: usize, stride: usize) -> Result<Self> {
        let mut index = Vec::new();
        for (ri, r) in records.iter().enumerate() {
            for end in window_ends(r.len(), window, stride)
                .map_err(|e| match e {
                    Error::InsufficientData(m) => Error::InsufficientData(format!("{}: {m}", r.cycle_name)),
                    other => other,
                })?
            {
                index.push((ri as u32, end as u32));
            }
        }
        Ok(Self { records, index, window })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window
    }

    pub fn records(&self) -> &[ScaledRecord] {
        &self.records
    }

    pub fn get(&self, i: usize) -> WindowSample<'_> {
        let (r, end) = self.index[i];
        WindowSample { record: &self.records[r as usize], end: end as usize, len: self.window }
    }

    pub fn iter(&self) -> impl Iterator<Item = WindowSample<'_>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}
