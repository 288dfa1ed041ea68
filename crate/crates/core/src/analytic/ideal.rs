//! Timeslot-level throughput of one N-node flow delivering M packets under
//! plain relaying, PNC, full duplex and end-to-end KIC.

use num_rational::Ratio;
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdealError {
    #[error("a flow needs at least 2 nodes, got {0}")]
    Nodes(i64),
    #[error("at least one packet is required, got {0}")]
    Packets(i64),
}

fn check(n: i64, m: i64) -> Result<(), IdealError> {
    if n < 2 {
        return Err(IdealError::Nodes(n));
    }
    if m < 1 {
        return Err(IdealError::Packets(m));
    }
    Ok(())
}

/// Flows shorter than four nodes are computed but fall outside the model's stated range.
pub fn below_model_range(n: i64) -> bool {
    n < 4
}

pub fn r_pr(n: i64, m: i64) -> Result<Rational, IdealError> {
    check(n, m)?;
    Ok(Rational::new(m, n - 1 + 3 * (m - 1)))
}

pub fn r_pnc(n: i64, m: i64) -> Result<Rational, IdealError> {
    check(n, m)?;
    Ok(Rational::new(m, n - 1 + 2 * (m - 1)))
}

/// Odd M alternates 1- and 3-slot gaps; even M ends on a 1-slot gap.
pub fn r_fd(n: i64, m: i64) -> Result<Rational, IdealError> {
    check(n, m)?;
    let slots = if m % 2 == 1 { n + 2 * m - 3 } else { n + 2 * m - 4 };
    Ok(Rational::new(m, slots))
}

pub fn r_e2ekic(n: i64, m: i64) -> Result<Rational, IdealError> {
    check(n, m)?;
    Ok(Rational::new(m, n - 1 + (m - 1)))
}

/// Exact `M → ∞` limits `(E2E-KIC, FD, PNC, PR)`: the reciprocal of the
/// per-packet slot cost, i.e. the coefficient of M in each denominator.
pub fn limits() -> [Rational; 4] {
    let per_packet_slots = [1, 2, 2, 3];
    per_packet_slots.map(|s| Rational::new(1, s))
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::new(a, b)
    }

    #[test]
    fn pr_examples() {
        assert_eq!(r_pr(4, 1), Ok(q(1, 3)));
        assert_eq!(r_pr(10, 4), Ok(q(2, 9)));
        assert!((to_f64(r_pr(4, 1_000_000).unwrap()) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn pnc_examples() {
        assert_eq!(r_pnc(4, 1), Ok(q(1, 3)));
        assert_eq!(r_pnc(7, 3), Ok(q(3, 10)));
        assert!((to_f64(r_pnc(4, 1_000_000).unwrap()) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn fd_examples() {
        assert_eq!(r_fd(4, 2), Ok(q(1, 2)));
        assert_eq!(r_fd(4, 3), Ok(q(3, 7)));
        assert_eq!(r_fd(4, 1), Ok(q(1, 3)));
    }

    #[test]
    fn e2ekic_examples() {
        assert_eq!(r_e2ekic(4, 4), Ok(q(2, 3)));
        assert_eq!(r_e2ekic(4, 1), Ok(q(1, 3)));
        assert!((to_f64(r_e2ekic(4, 1_000_000).unwrap()) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert_eq!(r_pr(1, 3), Err(IdealError::Nodes(1)));
        assert_eq!(r_fd(5, 0), Err(IdealError::Packets(0)));
        assert!(below_model_range(3) && !below_model_range(4));
    }

    #[test]
    fn single_packet_needs_n_minus_one_slots() {
        for n in 2..40 {
            let expect = q(1, n - 1);
            assert_eq!(r_pr(n, 1).unwrap(), expect);
            assert_eq!(r_pnc(n, 1).unwrap(), expect);
            assert_eq!(r_fd(n, 1).unwrap(), expect);
            assert_eq!(r_e2ekic(n, 1).unwrap(), expect);
        }
    }

    #[test]
    fn ordering_brute_force() {
        for n in 4..=50 {
            for m in 1..=50 {
                let (pr, pnc, fd, kic) = (
                    r_pr(n, m).unwrap(),
                    r_pnc(n, m).unwrap(),
                    r_fd(n, m).unwrap(),
                    r_e2ekic(n, m).unwrap(),
                );
                assert!(kic >= fd && fd >= pnc && pnc >= pr, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn limits_match_large_m() {
        let [kic, fd, pnc, pr] = limits();
        assert_eq!((kic, fd, pnc, pr), (q(1, 1), q(1, 2), q(1, 2), q(1, 3)));
        let m = 1_000_000;
        for n in [4, 7, 10] {
            assert!((to_f64(r_e2ekic(n, m).unwrap()) - to_f64(kic)).abs() < 1e-4);
            assert!((to_f64(r_fd(n, m).unwrap()) - to_f64(fd)).abs() < 1e-4);
            assert!((to_f64(r_pnc(n, m).unwrap()) - to_f64(pnc)).abs() < 1e-4);
            assert!((to_f64(r_pr(n, m).unwrap()) - to_f64(pr)).abs() < 1e-4);
        }
    }
}
