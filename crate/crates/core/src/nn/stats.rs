/// Running mean and variance with a parallel-merge (Chan) update.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanStd {
    mean: Vec<f64>,
    var: Vec<f64>,
    count: f64,
}

impl RunningMeanStd {
    /// Starts from mean 0, variance 1 with a negligible pseudo-count.
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        let tot = self.count + 1.0;
        for ((m, v), &xi) in self.mean.iter_mut().zip(&mut self.var).zip(x) {
            let delta = xi - *m;
            let new_mean = *m + delta / tot;
            let m2 = *v * self.count + delta * delta * self.count / tot;
            *m = new_mean;
            *v = m2 / tot;
        }
        self.count = tot;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn std(&self, i: usize) -> f64 {
        self.var[i].sqrt()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// `(x - mean) / sqrt(var + 1e-8)`, clipped to `[-clip, clip]`.
    pub fn normalize(&self, x: &[f64], clip: f64) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((xi, m), v)| ((xi - m) / (v + 1e-8).sqrt()).clamp(-clip, clip))
            .collect()
    }
}

/// Scalar Welford accumulator for population statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }
}

/// Population mean and standard deviation of a slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
