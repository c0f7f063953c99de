use crate::error::{Error, Result};
use crate::ClassId;

/// A hyperspectral cube stored band-interleaved-by-pixel: the value of band
/// `b` at `(row, col)` lives at `(row * width + col) * bands + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
    ground_truth: Option<Vec<ClassId>>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::dims(format!("cube extents must be positive: {height}x{width}x{bands}")));
        }
        if data.len() != height * width * bands {
            return Err(Error::dims(format!(
                "{height}x{width}x{bands} cube needs {} values, got {}",
                height * width * bands,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
            ground_truth: None,
        })
    }

    pub fn with_ground_truth(mut self, gt: Vec<ClassId>) -> Result<Self> {
        if gt.len() != self.height * self.width {
            return Err(Error::dims(format!(
                "ground truth has {} entries for a {}x{} image",
                gt.len(),
                self.height,
                self.width
            )));
        }
        self.ground_truth = Some(gt);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn ground_truth(&self) -> Option<&[ClassId]> {
        self.ground_truth.as_deref()
    }

    /// Class at a pixel; `None` for unlabeled (class 0) or when no ground truth is loaded.
    pub fn label_at(&self, row: usize, col: usize) -> Option<ClassId> {
        self.ground_truth
            .as_ref()
            .map(|gt| gt[row * self.width + col])
            .filter(|&c| c != 0)
    }

    pub fn spectrum(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn spectrum_at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.bands..(pixel + 1) * self.bands]
    }

    /// Labeled pixel coordinates grouped by class, in ascending class order
    /// and raster order within a class.
    pub fn labeled_pixels(&self) -> Vec<(ClassId, Vec<(usize, usize)>)> {
        let mut by_class: std::collections::BTreeMap<ClassId, Vec<(usize, usize)>> = Default::default();
        if let Some(gt) = &self.ground_truth {
            for (p, &c) in gt.iter().enumerate() {
                if c != 0 {
                    by_class.entry(c).or_default().push((p / self.width, p % self.width));
                }
            }
        }
        by_class.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_dims() {
        assert!(HsiCube::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(HsiCube::new(0, 2, 3, vec![]).is_err());
        let c = HsiCube::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(c.spectrum(1, 0), &[6.0, 7.0, 8.0]);
        assert!(c.clone().with_ground_truth(vec![0; 3]).is_err());
        let c = c.with_ground_truth(vec![0, 1, 2, 1]).unwrap();
        assert_eq!(c.label_at(0, 0), None);
        assert_eq!(c.label_at(1, 1), Some(1));
        let groups = c.labeled_pixels();
        assert_eq!(groups[0], (1, vec![(0, 1), (1, 1)]));
        assert_eq!(groups[1], (2, vec![(1, 0)]));
    }
}
