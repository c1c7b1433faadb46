//! Explicit Runge-Kutta tableaux of orders 2 through 5 and their order
//! condition checks.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableauError {
    #[error("order condition `{condition}` violated by {defect:e} for order-{order} tableau")]
    OrderCondition {
        condition: &'static str,
        order: usize,
        defect: f64,
    },
}

/// Coefficients of an explicit Runge-Kutta method. `a` is strictly lower
/// triangular, stored row-major as a full stages x stages matrix.
#[derive(Debug, Clone)]
pub struct ButcherTableau {
    pub order: usize,
    pub stages: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn a_at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages + j]
    }

    /// Heun's second-order method.
    pub fn rk2() -> Self {
        Self {
            order: 2,
            stages: 2,
            a: vec![0.0, 0.0, 1.0, 0.0],
            b: vec![0.5, 0.5],
            c: vec![0.0, 1.0],
        }
    }

    /// Third-order strong-stability-preserving method of Shu and Osher.
    pub fn rk3() -> Self {
        Self {
            order: 3,
            stages: 3,
            a: vec![
                0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, //
                0.25, 0.25, 0.0,
            ],
            b: vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            c: vec![0.0, 1.0, 0.5],
        }
    }

    /// The classical fourth-order method.
    pub fn rk4() -> Self {
        Self {
            order: 4,
            stages: 4,
            a: vec![
                0.0, 0.0, 0.0, 0.0, //
                0.5, 0.0, 0.0, 0.0, //
                0.0, 0.5, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        }
    }

    /// Butcher's six-stage fifth-order method.
    pub fn rk5() -> Self {
        Self {
            order: 5,
            stages: 6,
            a: vec![
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.25, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.125, 0.125, 0.0, 0.0, 0.0, 0.0, //
                0.0, -0.5, 1.0, 0.0, 0.0, 0.0, //
                3.0 / 16.0, 0.0, 0.0, 9.0 / 16.0, 0.0, 0.0, //
                -3.0 / 7.0, 2.0 / 7.0, 12.0 / 7.0, -12.0 / 7.0, 8.0 / 7.0, 0.0,
            ],
            b: vec![
                7.0 / 90.0,
                0.0,
                32.0 / 90.0,
                12.0 / 90.0,
                32.0 / 90.0,
                7.0 / 90.0,
            ],
            c: vec![0.0, 0.25, 0.25, 0.5, 0.75, 1.0],
        }
    }

    /// Tableau whose order matches the spatial order N+1, used so temporal and
    /// spatial accuracy refine together in convergence studies.
    pub fn order_matched(order: usize) -> Self {
        match order {
            0 | 1 | 2 => Self::rk2(),
            3 => Self::rk3(),
            4 => Self::rk4(),
            _ => Self::rk5(),
        }
    }

    /// Verify the rooted-tree order conditions up to the labeled order.
    pub fn check_order_conditions(&self, tol: f64) -> Result<(), TableauError> {
        let s = self.stages;
        let b = &self.b;
        let c = &self.c;
        let a = |i: usize, j: usize| self.a_at(i, j);

        // Row-sum consistency c_i = sum_j a_ij.
        for i in 0..s {
            let row: f64 = (0..s).map(|j| a(i, j)).sum();
            if (row - c[i]).abs() > tol {
                return Err(TableauError::OrderCondition {
                    condition: "c_i = sum_j a_ij",
                    order: self.order,
                    defect: (row - c[i]).abs(),
                });
            }
        }

        let ac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * c[j]).sum()).collect();
        let ac2: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * c[j] * c[j]).sum()).collect();
        let ac3: Vec<f64> = (0..s)
            .map(|i| (0..s).map(|j| a(i, j) * c[j] * c[j] * c[j]).sum())
            .collect();
        let aac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * ac[j]).sum()).collect();
        let aac2: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * ac2[j]).sum()).collect();
        let acac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * c[j] * ac[j]).sum()).collect();
        let aaac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a(i, j) * aac[j]).sum()).collect();

        let dot = |x: &dyn Fn(usize) -> f64| -> f64 { (0..s).map(|i| b[i] * x(i)).sum() };

        let conditions: Vec<(&'static str, usize, f64, f64)> = vec![
            ("sum b = 1", 1, dot(&|_| 1.0), 1.0),
            ("b.c = 1/2", 2, dot(&|i| c[i]), 0.5),
            ("b.c^2 = 1/3", 3, dot(&|i| c[i] * c[i]), 1.0 / 3.0),
            ("b.(Ac) = 1/6", 3, dot(&|i| ac[i]), 1.0 / 6.0),
            ("b.c^3 = 1/4", 4, dot(&|i| c[i] * c[i] * c[i]), 0.25),
            ("b.(c*Ac) = 1/8", 4, dot(&|i| c[i] * ac[i]), 0.125),
            ("b.(Ac^2) = 1/12", 4, dot(&|i| ac2[i]), 1.0 / 12.0),
            ("b.(AAc) = 1/24", 4, dot(&|i| aac[i]), 1.0 / 24.0),
            ("b.c^4 = 1/5", 5, dot(&|i| c[i].powi(4)), 0.2),
            ("b.(c^2*Ac) = 1/10", 5, dot(&|i| c[i] * c[i] * ac[i]), 0.1),
            ("b.(Ac)^2 = 1/20", 5, dot(&|i| ac[i] * ac[i]), 0.05),
            ("b.(c*Ac^2) = 1/15", 5, dot(&|i| c[i] * ac2[i]), 1.0 / 15.0),
            ("b.(Ac^3) = 1/20", 5, dot(&|i| ac3[i]), 0.05),
            ("b.(c*AAc) = 1/30", 5, dot(&|i| c[i] * aac[i]), 1.0 / 30.0),
            ("b.(A(c*Ac)) = 1/40", 5, dot(&|i| acac[i]), 1.0 / 40.0),
            ("b.(AAc^2) = 1/60", 5, dot(&|i| aac2[i]), 1.0 / 60.0),
            ("b.(AAAc) = 1/120", 5, dot(&|i| aaac[i]), 1.0 / 120.0),
        ];

        for (name, ord, got, want) in conditions {
            if ord <= self.order && (got - want).abs() > tol {
                return Err(TableauError::OrderCondition {
                    condition: name,
                    order: self.order,
                    defect: (got - want).abs(),
                });
            }
        }
        Ok(())
    }
}
