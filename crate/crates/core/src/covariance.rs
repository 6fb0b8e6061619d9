//! Covariance defect of the induced diagonal representation, and the orbit-closure
//! obstruction for equivariant embeddings of finite samples.

use serde::Serialize;

use crate::actions::{ActionError, PointAction};
use crate::almost::{AlmostError, Level};
use crate::cantor::MetricPoint;
use crate::group::{Group, Word};
use crate::scalar::Distance;

/// `max_{γ₀, e} |f(α(γ⁻¹γ₀)e) − f(A(γ⁻¹)(α(γ₀)e))|` over all elements `γ₀` of a finite
/// group, the norm of the difference of the two diagonal operators.
pub fn covariance_defect<P, A>(
    group: &Group,
    level: &Level<P>,
    action: &A,
    elements: &[Word],
    f: impl Fn(&P) -> f64,
    gamma: &Word,
) -> Result<f64, AlmostError>
where
    P: MetricPoint,
    A: PointAction<P> + ?Sized,
{
    let gi = group.invert(gamma)?;
    let pts = level.sample().points();
    let mut worst = 0.0f64;
    for g0 in elements {
        let left = level.get(group, &group.multiply(&gi, g0)?)?;
        let a0 = level.get(group, g0)?;
        for (i, _) in pts.iter().enumerate() {
            let x = &pts[left.apply(i)];
            let y = action.act_point(group, &gi, &pts[a0.apply(i)])?;
            worst = worst.max((f(x) - f(&y)).abs());
        }
    }
    Ok(worst)
}

/// `2 Lip(f) max_δ max_e d(δ·e, α(δ)e)`, which bounds [`covariance_defect`] whenever the
/// honest action is by isometries.
pub fn covariance_bound<P, A>(
    group: &Group,
    level: &Level<P>,
    action: &A,
    elements: &[Word],
    lipschitz: f64,
) -> Result<f64, AlmostError>
where
    P: MetricPoint,
    A: PointAction<P> + ?Sized,
{
    let mut worst = 0.0f64;
    for d in elements {
        worst = worst.max(level.approximation_defect(group, action, d)?.to_f64());
    }
    Ok(2.0 * lipschitz * worst)
}

/// Outcome of [`equivariant_embedding_check`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum EmbeddingCheck<P> {
    Closed,
    /// `element · point` leaves the sample.
    Witness { element: String, point: P, violations: usize },
}

/// Every `(γ, e)` with `γ·e` outside the sample, points in sample order and elements
/// in the given order.
pub fn embedding_violations<P, A>(
    group: &Group,
    action: &A,
    elements: &[Word],
    sample: &[P],
) -> Result<Vec<(Word, P)>, ActionError>
where
    P: MetricPoint,
    A: PointAction<P> + ?Sized,
{
    let mut sorted = sample.to_vec();
    sorted.sort();
    let mut out = Vec::new();
    for x in &sorted {
        for w in elements {
            let y = action.act_point(group, w, x)?;
            if sorted.binary_search(&y).is_err() {
                out.push((w.clone(), x.clone()));
            }
        }
    }
    Ok(out)
}

/// Checks that the sample is a union of orbits, so that the inclusion could be
/// equivariant. The witness is the point with the most escaping images (the least such
/// point on ties) together with its first escaping element.
pub fn equivariant_embedding_check<P, A>(
    group: &Group,
    action: &A,
    elements: &[Word],
    sample: &[P],
) -> Result<EmbeddingCheck<P>, ActionError>
where
    P: MetricPoint,
    A: PointAction<P> + ?Sized,
{
    let v = embedding_violations(group, action, elements, sample)?;
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j].1 == v[i].1 {
            j += 1;
        }
        if best.is_none_or(|(_, count)| j - i > count) {
            best = Some((i, j - i));
        }
        i = j;
    }
    Ok(match best {
        None => EmbeddingCheck::Closed,
        Some((i, count)) => EmbeddingCheck::Witness {
            element: group.format_word(&v[i].0),
            point: v[i].1.clone(),
            violations: count,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::CircleAction;
    use crate::almost::displaced_orbit_action;
    use crate::cantor::CirclePoint;
    use crate::group::presets::cyclic;
    use num_rational::Ratio;

    fn pts(v: &[(i64, i64)]) -> Vec<CirclePoint> {
        v.iter().map(|&(a, b)| CirclePoint::from_fraction(a, b).unwrap()).collect()
    }

    #[test]
    fn rotation_by_a_third() {
        let g = cyclic(3);
        let a = CircleAction::cyclic_rotation(&g, 3).unwrap();
        let els: Vec<Word> = g.leaf_element_words(0).into_values().collect();
        let closed = equivariant_embedding_check(&g, &a, &els, &pts(&[(0, 1), (1, 3), (2, 3)])).unwrap();
        assert_eq!(closed, EmbeddingCheck::Closed);
        let w = equivariant_embedding_check(&g, &a, &els, &pts(&[(0, 1), (1, 3), (7, 10)])).unwrap();
        match w {
            EmbeddingCheck::Witness { element, point, .. } => {
                assert_eq!(element, "a.1");
                assert_eq!(point, CirclePoint::from_fraction(7, 10).unwrap());
            }
            _ => panic!("expected a witness"),
        }
    }

    #[test]
    fn half_rotation_covariance() {
        let g = cyclic(2);
        let a = CircleAction::cyclic_rotation(&g, 2).unwrap();
        let els: Vec<Word> = g.leaf_element_words(0).into_values().collect();
        let base = pts(&[(1, 10)]);
        let f = |x: &CirclePoint| {
            let t = x.position().to_f64();
            t.min(1.0 - t)
        };
        let honest = displaced_orbit_action(&g, &a, &els, &base, |_| Ratio::from_integer(0), 0).unwrap();
        assert_eq!(covariance_defect(&g, &honest, &a, &els, f, &els[1]).unwrap(), 0.0);
        let moved = displaced_orbit_action(
            &g,
            &a,
            &els,
            &base,
            |x| if *x == base[0] { Ratio::new(1, 100) } else { Ratio::from_integer(0) },
            1,
        )
        .unwrap();
        // E = {11/100, 6/10}; every term compares 0.11 with 0.10 or 0.40 with 0.39
        let d = covariance_defect(&g, &moved, &a, &els, f, &els[1]).unwrap();
        assert!((d - 0.01).abs() < 1e-12, "{d}");
        assert!(d <= 0.02);
        assert!(d <= covariance_bound(&g, &moved, &a, &els, 1.0).unwrap() + 1e-12);
        assert_eq!(covariance_defect(&g, &moved, &a, &els, |_| 1.0, &els[1]).unwrap(), 0.0);
    }
}
