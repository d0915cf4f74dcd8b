use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use utraj_core::gaussian::gaussian_logpdf;
use utraj_core::statdist::{
    bhattacharyya, bhattacharyya_gmm, distance_for, distance_grad, hellinger, symmetric_kl, DistanceKind,
};
use utraj_core::{Gaussian2, Gmm2, Mat2, Vec2};

fn random_gaussian(rng: &mut ChaCha8Rng) -> Gaussian2 {
    let mean = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let l = Mat2::new(rng.random_range(0.4..1.5), 0.0, rng.random_range(-0.6..0.6), rng.random_range(0.4..1.5));
    Gaussian2::new(mean, l * l.transpose()).unwrap()
}

/// −ln ∫√(p q) by a tensor-product trapezoid rule on a box covering both densities.
fn bh_quadrature(p: &Gaussian2, q: &Gaussian2) -> f64 {
    let spread = |g: &Gaussian2| g.cov[(0, 0)].max(g.cov[(1, 1)]).sqrt();
    let r = 9.0 * spread(p).max(spread(q));
    let lo = p.mean.inf(&q.mean) - Vec2::repeat(r);
    let hi = p.mean.sup(&q.mean) + Vec2::repeat(r);
    let n = 500;
    let (hx, hy) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
    let mut acc = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let x = Vec2::new(lo.x + i as f64 * hx, lo.y + j as f64 * hy);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * if j == 0 || j == n { 0.5 } else { 1.0 };
            let lp = gaussian_logpdf(p, &x).unwrap();
            let lq = gaussian_logpdf(q, &x).unwrap();
            acc += w * (0.5 * (lp + lq)).exp();
        }
    }
    -(acc * hx * hy).ln()
}

fn sample(g: &Gaussian2, rng: &mut ChaCha8Rng) -> Vec2 {
    g.transform_standard(Vec2::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).unwrap()
}

fn kl_mc(p: &Gaussian2, q: &Gaussian2, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    (0..n)
        .map(|_| {
            let x = sample(p, rng);
            gaussian_logpdf(p, &x).unwrap() - gaussian_logpdf(q, &x).unwrap()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn bhattacharyya_matches_quadrature_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (p, q) = (random_gaussian(&mut rng), random_gaussian(&mut rng));
        let exact = bhattacharyya(&p, &q).unwrap();
        let oracle = bh_quadrature(&p, &q);
        assert!((exact - oracle).abs() < 1e-4, "{exact} vs {oracle}");
    }
}

#[test]
fn hand_examples_match_quadrature() {
    let i = Gaussian2::standard();
    let shifted = Gaussian2::isotropic(Vec2::new(1.0, 0.0), 1.0).unwrap();
    let wide = Gaussian2::isotropic(Vec2::zeros(), 4.0).unwrap();
    assert!((bh_quadrature(&i, &shifted) - 0.125).abs() < 1e-4);
    assert!((bh_quadrature(&i, &wide) - 0.5 * (6.25f64 / 4.0).ln()).abs() < 1e-4);
}

#[test]
fn skl_and_hellinger_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 200_000;
    for _ in 0..10 {
        let (p, q) = (random_gaussian(&mut rng), random_gaussian(&mut rng));
        let skl_mc = 0.5 * (kl_mc(&p, &q, n, &mut rng) + kl_mc(&q, &p, n, &mut rng));
        let skl = symmetric_kl(&p, &q).unwrap();
        assert!((skl - skl_mc).abs() < 0.01 * skl, "skl {skl} vs {skl_mc}");

        // BC = E_p[√(q/p)]
        let bc = (0..n)
            .map(|_| {
                let x = sample(&p, &mut rng);
                (0.5 * (gaussian_logpdf(&q, &x).unwrap() - gaussian_logpdf(&p, &x).unwrap())).exp()
            })
            .sum::<f64>()
            / n as f64;
        let he_mc = (1.0 - bc).max(0.0).sqrt();
        let he = hellinger(&p, &q).unwrap();
        assert!((he - he_mc).abs() < 0.01 * he, "he {he} vs {he_mc}");
    }
}

#[test]
fn isotropic_scale_skl_against_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = Gaussian2::standard();
    let q = Gaussian2::isotropic(Vec2::zeros(), 4.0).unwrap();
    let mc = 0.5 * (kl_mc(&p, &q, 400_000, &mut rng) + kl_mc(&q, &p, 400_000, &mut rng));
    let exact = symmetric_kl(&p, &q).unwrap();
    assert!((exact - mc).abs() < 0.01 * exact);
}

#[test]
fn mixture_weight_derivative_is_component_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let comps: Vec<Gaussian2> = (0..3).map(|_| random_gaussian(&mut rng)).collect();
    let q = random_gaussian(&mut rng);
    let w = [0.2, 0.5, 0.3];
    let h = 1e-6;
    for k in 0..3 {
        // The mixture distance is linear in the weights, so perturb without renormalizing.
        let f = |dw: f64| {
            w.iter().zip(&comps).enumerate().map(|(j, (&wj, c))| (wj + if j == k { dw } else { 0.0 }) * bhattacharyya(c, &q).unwrap()).sum::<f64>()
        };
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let exact = bhattacharyya(&comps[k], &q).unwrap();
        assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-12));
    }
    let gmm = Gmm2::new(w.to_vec(), comps.clone()).unwrap();
    let direct: f64 = w.iter().zip(&comps).map(|(wi, c)| wi * bhattacharyya(c, &q).unwrap()).sum();
    assert!((bhattacharyya_gmm(&gmm, &q).unwrap() - direct).abs() < 1e-14);
}

fn fd_check(kind: DistanceKind, p: &Gaussian2, q: &Gaussian2) {
    let d = distance_for(kind);
    let g = distance_grad(kind, p, q).unwrap();
    let h = 1e-5;
    let eval = |dm: Vec2, dc: Mat2| d.distance(&Gaussian2 { mean: p.mean + dm, cov: p.cov + dc }, q).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    for i in 0..2 {
        let mut e = Vec2::zeros();
        e[i] = h;
        let fd = (eval(e, Mat2::zeros()) - eval(-e, Mat2::zeros())) / (2.0 * h);
        assert!(rel(fd, g.mean[i]) < 1e-4, "{kind} mean[{i}] {fd} vs {}", g.mean[i]);
    }
    for (i, j) in [(0, 0), (1, 1), (0, 1)] {
        let mut e = Mat2::zeros();
        e[(i, j)] = h;
        e[(j, i)] = h;
        let fd = (eval(Vec2::zeros(), e) - eval(Vec2::zeros(), -e)) / (2.0 * h);
        let analytic = if i == j { g.cov[(i, i)] } else { 2.0 * g.cov[(0, 1)] };
        assert!(rel(fd, analytic) < 1e-4, "{kind} cov[{i}{j}] {fd} vs {analytic}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [DistanceKind::Bhattacharyya, DistanceKind::SymmetricKl, DistanceKind::Hellinger] {
        for _ in 0..100 {
            let (p, q) = (random_gaussian(&mut rng), random_gaussian(&mut rng));
            fd_check(kind, &p, &q);
        }
    }
}

proptest! {
    #[test]
    fn bhattacharyya_increases_with_offset(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let p = Gaussian2::standard();
        let d = |o: f64| bhattacharyya(&p, &Gaussian2::isotropic(Vec2::new(o, 0.0), 1.0).unwrap()).unwrap();
        prop_assert_eq!(d(a) < d(b), a < b);
    }
}
