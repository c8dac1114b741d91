//! Unit-period mollified sawtooth with slopes `-l1` and `l2`, together with
//! its zero-mean antiderivative and second antiderivative in closed form.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sawtooth {
    l1: f64,
    l2: f64,
    /// Fraction of the period with slope `l2`.
    w: f64,
    /// Start of the rising piece.
    a: f64,
    amp: f64,
    /// Half-width of each smoothed kink, in phase units.
    pub rho: f64,
    s1_shift: f64,
    s1_bound: f64,
}

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

impl Sawtooth {
    pub fn new(l1: f64, l2: f64, rho: f64) -> Self {
        let w = l1 / (l1 + l2);
        let a = 0.5 * (1.0 - w);
        let amp = l1 * l2 / (l1 + l2);
        let rho = rho.min(0.25 * w.min(1.0 - w));
        let mut s = Self { l1, l2, w, a, amp, rho, s1_shift: 0.0, s1_bound: 0.0 };
        // Simpson is exact on each quadratic piece of the unsmoothed antiderivative
        let pieces = [(0.0, a), (a, a + w), (a + w, 1.0)];
        let mean: f64 = pieces
            .iter()
            .map(|&(x0, x1)| (x1 - x0) / 6.0 * (s.s1_sharp(x0) + 4.0 * s.s1_sharp(0.5 * (x0 + x1)) + s.s1_sharp(x1)))
            .sum();
        s.s1_shift = -mean;
        let n = 8192;
        let m = (0..n).map(|i| s.s1(i as f64 / n as f64).abs()).fold(0.0, f64::max);
        s.s1_bound = 1.01 * m + 0.1 * rho * rho * (l1 + l2);
        s
    }

    fn kinks(&self) -> [(f64, f64); 2] {
        let jump = self.l1 + self.l2;
        [(self.a, jump), (self.a + self.w, -jump)]
    }

    /// Derivative `S'`.
    pub fn d(&self, theta: f64) -> f64 {
        let th = theta - theta.floor();
        let mut v = if th >= self.a && th < self.a + self.w { self.l2 } else { -self.l1 };
        for (c, jump) in self.kinks() {
            let y = th - c;
            if y.abs() < self.rho {
                let x = (y + self.rho) / (2.0 * self.rho);
                let before = if jump > 0.0 { -self.l1 } else { self.l2 };
                v = before + jump * smoothstep(x);
            }
        }
        v
    }

    fn s_sharp(&self, th: f64) -> f64 {
        let h = 0.5 * self.amp;
        if th < self.a {
            -h + self.l1 * (self.a - th)
        } else if th < self.a + self.w {
            -h + self.l2 * (th - self.a)
        } else {
            h - self.l1 * (th - self.a - self.w)
        }
    }

    fn s1_sharp(&self, th: f64) -> f64 {
        let h = 0.5 * self.amp;
        let (a, w) = (self.a, self.w);
        let i1 = -h * a + self.l1 * a * a * 0.5;
        let i2 = i1 - h * w + self.l2 * w * w * 0.5;
        if th < a {
            -h * th + self.l1 * (a * th - th * th * 0.5)
        } else if th < a + w {
            let y = th - a;
            i1 - h * y + self.l2 * y * y * 0.5
        } else {
            let y = th - a - w;
            i2 + h * y - self.l1 * y * y * 0.5
        }
    }

    /// Zero-mean antiderivative `S` of `S'`.
    pub fn s(&self, theta: f64) -> f64 {
        let th = theta - theta.floor();
        let mut v = self.s_sharp(th);
        for (c, jump) in self.kinks() {
            let y = th - c;
            if y.abs() < self.rho {
                let x = (y + self.rho) / (2.0 * self.rho);
                v += jump * (2.0 * self.rho * x * x * x * (1.0 - 0.5 * x) - y.max(0.0));
            }
        }
        v
    }

    /// Periodic antiderivative of `S`.
    pub fn s1(&self, theta: f64) -> f64 {
        let th = theta - theta.floor();
        let r2 = self.rho * self.rho;
        let mut v = self.s1_sharp(th) + self.s1_shift;
        for (c, jump) in self.kinks() {
            let y = th - c;
            if y >= 0.0 {
                v += jump * 0.1 * r2;
            }
            if y.abs() < self.rho {
                let x = (y + self.rho) / (2.0 * self.rho);
                let x4 = x * x * x * x;
                let ym = y.max(0.0);
                v += jump * (4.0 * r2 * (0.25 * x4 - 0.1 * x4 * x) - 0.5 * ym * ym - if y >= 0.0 { 0.1 * r2 } else { 0.0 });
            }
        }
        v
    }

    /// Bound on `|S|`.
    pub fn s_bound(&self) -> f64 {
        0.5 * self.amp
    }

    /// Bound on `|S1|`.
    pub fn s1_bound(&self) -> f64 {
        self.s1_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antiderivatives_are_consistent() {
        let s = Sawtooth::new(0.7, 1.9, 0.01);
        let h = 1e-6;
        for i in 0..2000 {
            let th = i as f64 / 2000.0 + 0.000123;
            let ds = (s.s(th + h) - s.s(th - h)) / (2.0 * h);
            let ds1 = (s.s1(th + h) - s.s1(th - h)) / (2.0 * h);
            assert!((ds - s.d(th)).abs() < 1e-6, "S' at {th}");
            assert!((ds1 - s.s(th)).abs() < 1e-6, "S at {th}");
        }
        assert!((s.s1(0.0) - s.s1(1.0 - 1e-15)).abs() < 1e-12);
        assert!((s.s(0.0) - s.s(1.0 - 1e-15)).abs() < 1e-12);
    }
}
