//! Randomized invariants of the positivity limiter, the numerical flux and
//! the primitive projections.

use proptest::prelude::*;

use ppcns::dg::{limit_field, DgField, LimitSet, Space};
use ppcns::driver::sh_minima;
use ppcns::euler::{
    flux_along, in_g_eps, lax_friedrichs_flux, limit_cell, max_wave_speed, ConsState, HyperbolicBc, ParabolicBc,
};
use ppcns::mesh::{build_mesh, DomainSpec, Rect};
use ppcns::parabolic::{project_backward, project_forward};

const GAMMA: f64 = 1.4;

fn state(rho: f64, u: f64, v: f64, p: f64) -> ConsState {
    ConsState::from_primitive(rho, [u, v], p, GAMMA)
}

fn admissible() -> impl Strategy<Value = ConsState> {
    (1e-3..5.0f64, -3.0..3.0f64, -3.0..3.0f64, 1e-3..5.0f64).prop_map(|(r, u, v, p)| state(r, u, v, p))
}

/// Point values that may leave the admissible set.
fn wild() -> impl Strategy<Value = ConsState> {
    (-1.0..5.0f64, -3.0..3.0f64, -3.0..3.0f64, -1.0..5.0f64).prop_map(|(r, u, v, p)| ConsState {
        rho: r,
        m: [r * u, r * v],
        energy: p / (GAMMA - 1.0) + 0.5 * r.abs() * (u * u + v * v),
    })
}

fn unit_cell(k: usize) -> Space {
    let spec = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [1.0, 1.0])])
        .segment(0, 0.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
        .segment(0, 1.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
        .segment(1, 0.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
        .segment(1, 1.0, [0.0, 1.0], HyperbolicBc::Outflow, ParabolicBc::Neumann);
    Space::new(build_mesh(&spec, 1.0).unwrap(), k).unwrap()
}

proptest! {
    #[test]
    fn limited_points_are_admissible(avg in admissible(), pts in prop::collection::vec(wild(), 1..20)) {
        let eps = 1e-4f64.min(avg.rho).min(avg.rho_e());
        let out = limit_cell(&pts, &avg, eps).unwrap();
        for p in &out {
            prop_assert!(p.rho >= eps * (1.0 - 1e-12) - 1e-15);
            prop_assert!(p.rho_e() >= eps - 1e-13 * p.energy.abs().max(1.0));
        }
        let again = limit_cell(&out, &avg, eps).unwrap();
        for (a, b) in out.iter().zip(&again) {
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn admissible_points_are_untouched(avg in admissible(), pts in prop::collection::vec(admissible(), 1..20)) {
        let out = limit_cell(&pts, &avg, 1e-4).unwrap();
        prop_assert_eq!(out, pts);
    }

    #[test]
    fn field_limiter_keeps_average(k in 1usize..=3, seed in prop::collection::vec(wild(), 16), lift in 0.1..1.0f64) {
        let sp = unit_cell(k);
        let mut f = DgField::like(&sp);
        for j in 0..sp.nloc() {
            f.set_node(0, j, &seed[j % seed.len()]);
        }
        // push the average into the admissible set
        let a = f.average(&sp, 0);
        let dr = (lift - a.rho).max(0.0);
        for j in 0..sp.nloc() {
            let mut s = f.node(0, j);
            s.rho += dr;
            f.set_node(0, j, &s);
        }
        let a = f.average(&sp, 0);
        let de = (lift - a.rho_e()).max(0.0);
        for j in 0..sp.nloc() {
            let mut s = f.node(0, j);
            s.energy += de;
            f.set_node(0, j, &s);
        }
        let before = f.average(&sp, 0);
        prop_assume!(in_g_eps(&before, 1e-3));
        limit_field(&sp, &mut f, 1e-3, LimitSet::HyperbolicAndNodes).unwrap();
        let after = f.average(&sp, 0);
        for (x, y) in before.to_array().iter().zip(after.to_array()) {
            prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
        let (r, e) = sh_minima(&sp, &f);
        prop_assert!(r >= 1e-3 - 1e-13 && e >= 1e-3 - 1e-13);
    }

    #[test]
    fn projections_invert_each_other(k in 1usize..=3, s in prop::collection::vec(admissible(), 16)) {
        let sp = unit_cell(k);
        let mut f = DgField::like(&sp);
        for j in 0..sp.nloc() {
            f.set_node(0, j, &s[j]);
        }
        let p = project_forward(&sp, &f).unwrap();
        let g = project_backward(&sp, &p);
        for (a, b) in f.data.iter().zip(&g.data) {
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }

    #[test]
    fn flux_is_consistent_and_conservative(a in admissible(), b in admissible(), th in 0.0..std::f64::consts::TAU) {
        let n = [th.cos(), th.sin()];
        let al = max_wave_speed(&a, &b, n, GAMMA).unwrap();
        let f = lax_friedrichs_flux(&a, &a, n, al, GAMMA);
        let g = flux_along(&a, n, GAMMA);
        for v in 0..4 {
            prop_assert!((f[v] - g[v]).abs() <= 1e-13 * g[v].abs().max(1.0));
        }
        let fab = lax_friedrichs_flux(&a, &b, n, al, GAMMA);
        let fba = lax_friedrichs_flux(&b, &a, [-n[0], -n[1]], al, GAMMA);
        for v in 0..4 {
            prop_assert!((fab[v] + fba[v]).abs() <= 1e-12 * fab[v].abs().max(1.0));
        }
    }

    /// First-order update with Lax-Friedrichs fluxes under the half CFL
    /// condition keeps the state admissible.
    #[test]
    fn first_order_update_is_positive(l in admissible(), c in admissible(), r in admissible(), frac in 0.0..1.0f64) {
        let n = [1.0, 0.0];
        let al = max_wave_speed(&l, &c, n, GAMMA).unwrap().max(max_wave_speed(&c, &r, n, GAMMA).unwrap());
        let lam = frac * 0.5 / al;
        let fr = lax_friedrichs_flux(&c, &r, n, al, GAMMA);
        let fl = lax_friedrichs_flux(&l, &c, n, al, GAMMA);
        let u = c.to_array();
        let out = ConsState::from_array(std::array::from_fn(|v| u[v] - lam * (fr[v] - fl[v])));
        prop_assert!(out.rho > 0.0);
        prop_assert!(out.rho_e() > 0.0);
    }
}

