//! Acceptance suite: one PASS/FAIL line per criterion, details indented below.

use std::f64::consts::{PI, SQRT_2};
use std::process::Command;

use gdpkit::compose::{self, CompositionScenario, Method};
use gdpkit::gdpt::{self, head_measure, MeasurementConfig, Strategy};
use gdpkit::identify::{tail_limit, EstimateKind, Trend};
use gdpkit::profiles::{
    builtin_profile, implication_threshold, min_noise_for_target, worst_case_mechanism_delta, PrivacyPoint,
    PrivacyProfile, TradeoffEquation,
};
use gdpkit::specfun;
use gdpkit::transform::{self, SubsampleSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn(&mut Criterion);

#[derive(Default)]
struct Criterion {
    details: Vec<String>,
    failed: bool,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: String) {
        self.details.push(format!("    {} {what}", if ok { "ok  " } else { "FAIL" }));
        self.failed |= !ok;
    }

    fn near(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, format!("{label}: got {got:.6}, want {want} ± {tol}"));
    }

    fn note(&mut self, what: String) {
        self.details.push(format!("    info {what}"));
    }
}

fn laplace(ratio: f64) -> PrivacyProfile {
    builtin_profile(&TradeoffEquation::Laplace { sensitivity: ratio, scale: 1.0 }).unwrap()
}

fn sgd() -> PrivacyProfile {
    builtin_profile(&TradeoffEquation::SgdLike { a: 2.0, b: 1.0, sigma: 2.0 }).unwrap()
}

fn icea() -> PrivacyProfile {
    builtin_profile(&TradeoffEquation::Icea { m: 20, n: 4 }).unwrap()
}

const DELTAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

fn table_reproduction(c: &mut Criterion) {
    let s = CompositionScenario::new(0.2, 50, DELTAS.to_vec()).unwrap();
    let report = compose::build_report(&s, &MeasurementConfig::new(10.0, 1000.0)).unwrap();
    let expected: [(Method, [f64; 4], f64); 6] = [
        (Method::Basic, [9.89, 9.99, 10.0, 10.0], 0.01),
        (Method::Advanced, [5.25, 6.51, 7.47, 8.28], 0.01),
        (Method::Gdp, [3.1, 5.06, 6.47, 7.62], 0.05),
        (Method::GdpLap, [2.87, 4.74, 6.09, 7.19], 0.05),
        (Method::Optimal, [2.12, 3.64, 4.76, 5.28], 0.02),
        (Method::GdpSummary, [2.14, 3.73, 4.87, 5.80], 0.05),
    ];
    for (method, want, tol) in expected {
        for (j, w) in want.iter().enumerate() {
            c.near(&format!("{} delta={:e}", method.as_str(), DELTAS[j]), report.get(method)[j], *w, tol);
        }
    }
    let paper_rdp = [12.14, 17.17, 21.03, 24.28];
    for (j, w) in paper_rdp.iter().enumerate() {
        c.note(format!("rdp delta={:e}: pipeline {:.4}, published {w} (no tolerance)", DELTAS[j], report.get(Method::Rdp)[j]));
    }
}

fn mu_measurements(c: &mut Criterion) {
    c.near("pure 0.2-DP to GDP", transform::pure_to_gdp(0.2).unwrap(), 0.2505, 0.001);

    let cfg = MeasurementConfig::new(10.0, 1000.0);
    let b = head_measure(&laplace(0.2), &cfg).unwrap().bracket;
    c.check(b.contains(0.2391) && b.width() <= 0.001, format!("Laplace 0.2-DP bracket [{:.6}, {:.6}] contains 0.2391, width <= 0.001", b.mu_lo, b.mu_hi));
    let lap_step = b.mu_hi;

    let b = head_measure(&laplace(2.0), &cfg).unwrap().bracket;
    c.check(
        b.mu_lo <= 1.81 && b.mu_hi >= 1.79 && b.width() <= 0.01,
        format!("Laplace 2-DP bracket [{:.6}, {:.6}] meets 1.80 ± 0.01, width <= 0.01", b.mu_lo, b.mu_hi),
    );

    let mu_pure = transform::pure_to_gdp(0.2).unwrap();
    c.near("50-fold pure 0.2-DP", compose::gdp_compose(&[mu_pure; 50]), 1.771, 0.002);
    c.near("50-fold Laplace 0.2-DP", compose::gdp_compose(&[lap_step; 50]), 1.691, 0.002);
}

fn subsampling(c: &mut Criterion) {
    let cfg = MeasurementConfig::new(10.0, 1000.0);
    for (gamma, lo, hi) in [(0.5, 0.96, 1.00), (0.1, 0.26, 0.30)] {
        let q = transform::poisson_subsample(&laplace(2.0), &SubsampleSpec::new(gamma).unwrap()).unwrap();
        let b = head_measure(&q, &cfg).unwrap().bracket;
        c.check(lo <= b.mu_lo && b.mu_hi <= hi, format!("gamma={gamma}: [{:.6}, {:.6}] within [{lo}, {hi}]", b.mu_lo, b.mu_hi));
    }
}

fn identification(c: &mut Criterion) {
    let cases = [(laplace(2.0), 0.0), (sgd(), 0.5f64.sqrt()), (icea(), f64::INFINITY)];
    for (p, want) in &cases {
        let t = tail_limit(p);
        let exact = if want.is_finite() { (t.mu_t - want).abs() <= 1e-15 } else { t.mu_t == *want };
        c.check(t.kind == EstimateKind::Analytic && exact, format!("{} analytic mu_t = {} (want {want})", p.family(), t.mu_t));

        let inner = p.clone();
        let opaque = PrivacyProfile::from_ln_fn("opaque", move |e| inner.ln_delta(e)).unwrap();
        let n = tail_limit(&opaque);
        if want.is_finite() {
            let ok = n.trend == Trend::Converging && (n.mu_t - want).abs() <= 0.02 * want.max(f64::MIN_POSITIVE);
            let ok = ok || (*want == 0.0 && n.mu_t == 0.0);
            c.check(ok, format!("{} numeric mu_t = {} ({:?})", p.family(), n.mu_t, n.trend));
        } else {
            c.check(n.trend == Trend::Diverging, format!("{} numeric trend {:?}", p.family(), n.trend));
        }
    }
}

fn deep_tail(c: &mut Criterion) {
    let ln = specfun::ln_delta_mu(6.0, 100.0).unwrap();
    let ratio = (ln - 1e-43f64.ln()).exp();
    c.check(ln.is_finite(), format!("ln delta_6(100) = {ln} is finite"));
    c.check((1.0 / 3.0..=3.0).contains(&ratio), format!("delta_6(100) / 1e-43 = {ratio:.4}"));
    let d = specfun::delta_mu(6.0, 100.0).unwrap();
    c.check(d > 0.0, format!("delta_6(100) = {d:e} > 0"));
}

fn property_suites(c: &mut Criterion) {
    // derivative bound of eps -> mu_GDP(eps, delta)
    let mut worst: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..20 {
        let eps = 5.0 * i as f64 / 19.0;
        for j in 0..20 {
            let delta = 1e-8 * (0.5f64 / 1e-8).powf(j as f64 / 19.0);
            let mu = |e: f64| {
                let b = gdpt::mu_gdp_bounds(e, delta, 1e-13, 10.0).unwrap();
                0.5 * (b.mu_lo + b.mu_hi)
            };
            let slope = (mu(eps + 1e-4) - mu(eps)) / 1e-4;
            worst = (worst.0.min(slope), worst.1.max(slope));
        }
    }
    let bound = SQRT_2 * PI / 2.0;
    c.check(worst.0 >= -1e-6 && worst.1 <= bound + 1e-6, format!("slopes in [{:.6}, {:.6}] within [0, {bound:.6}]", worst.0, worst.1));

    // staircase sandwich and gap on the built-in profiles
    let cc = 100.0;
    let margin = 1.0 / (2.0 * cc);
    let profiles = [
        laplace(2.0),
        sgd().refine(),
        icea().refine(),
        PrivacyProfile::pure_dp(0.2).unwrap(),
        PrivacyProfile::gdp_curve(1.5).unwrap(),
        compose::optimal_profile_pure(0.2, 50).unwrap(),
    ];
    for p in &profiles {
        let (n, eps_h) = (64usize, 4.0);
        let d = eps_h / n as f64;
        let (lo, hi) = gdpt::staircase_bounds_with(p, eps_h, n, margin, 10.0).unwrap();
        let gap = hi.max() - lo.max();
        let sandwich = lo.knots.iter().all(|&(x, _)| {
            let mid = x + 0.5 * d;
            let g = gdpt::gdpt_eval(p, mid, 1e-9).unwrap();
            lo.eval(mid).unwrap() <= g.mu_hi && g.mu_lo <= hi.eval(mid).unwrap()
        });
        c.check(
            sandwich && gap <= SQRT_2 * PI * d + 2.0 * margin,
            format!("{}: staircase gap {gap:.6} <= {:.6}, sandwich {sandwich}", p.family(), SQRT_2 * PI * d + 2.0 * margin),
        );
    }

    // implication threshold vs four-outcome brute force
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut max_err: f64 = 0.0;
    for _ in 0..20 {
        let (eps0, delta0, eps) = (rng.gen_range(0.0..5.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..6.0));
        let closed = implication_threshold(PrivacyPoint { eps: eps0, delta: delta0 }, eps);
        max_err = max_err.max((closed - worst_case_mechanism_delta(eps0, delta0, eps)).abs());
    }
    c.check(max_err <= 1e-12, format!("brute force vs closed form, 20 triples: max error {max_err:e}"));

    // delta_mu / delta_mu_tilde -> 1
    for mu in [0.5, 1.0, 2.0] {
        let errs: Vec<f64> = [25.0, 50.0, 100.0, 200.0, 400.0, 800.0]
            .iter()
            .map(|&e| (specfun::ln_delta_mu(mu, e).unwrap() - specfun::ln_delta_mu_tilde(mu, e).unwrap()).exp_m1().abs())
            .collect();
        let shrinking = errs.windows(2).all(|w| w[1] < w[0]);
        c.check(shrinking && errs[5] < 0.01, format!("mu={mu}: |ratio - 1| = {:.2e} .. {:.2e}", errs[0], errs[5]));
    }

    // cheaper noise from the implication order
    for scale in [1.0, 2.5] {
        let g = TradeoffEquation::LogRatio { c: scale, sigma: 1.0 };
        let target = PrivacyPoint { eps: 0.2, delta: (-2.0f64).exp() };
        let choice = min_noise_for_target(&g, target).unwrap();
        c.near(&format!("noise for C={scale}"), choice.sigma, 8.086 * scale, 0.01 * scale);
    }

    // naive vs shuffled head measurement
    for p in [laplace(2.0), sgd().refine()] {
        let cfg = MeasurementConfig::new(10.0, 1000.0);
        let naive = head_measure(&p, &cfg.with_strategy(Strategy::Naive)).unwrap().bracket;
        let agree = (0..5).all(|seed| {
            let s = head_measure(&p, &cfg.with_seed(seed)).unwrap().bracket;
            (s.mu_hi - naive.mu_hi).abs() <= 1e-3 && s.mu_lo <= naive.mu_hi && naive.mu_lo <= s.mu_hi
        });
        c.check(agree, format!("{}: 5 seeds agree with naive [{:.6}, {:.6}]", p.family(), naive.mu_lo, naive.mu_hi));
    }
}

fn cli_determinism(c: &mut Criterion) {
    let bin = env!("CARGO_BIN_EXE_gdpkit");
    let runs: [&[&str]; 2] = [
        &["table", "--eps", "0.2", "--k", "50", "--deltas", "1e-1,1e-2,1e-3,1e-4", "--seed", "3"],
        &["measure", "--family", "laplace", "--eps-pure", "2", "--eps-h", "10", "--c", "1000", "--seed", "3"],
    ];
    for args in runs {
        let once = Command::new(bin).args(args).env_remove("GDPKIT_FORMAT").output().unwrap();
        let twice = Command::new(bin).args(args).env_remove("GDPKIT_FORMAT").output().unwrap();
        let ok = once.status.success() && !once.stdout.is_empty() && once.stdout == twice.stdout;
        c.check(ok, format!("`{}` byte-identical across runs ({} bytes)", args[0], once.stdout.len()));
    }
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("composition table reproduction", table_reproduction),
        ("mu measurements", mu_measurements),
        ("subsampling amplification", subsampling),
        ("tail-limit identification", identification),
        ("deep-tail stability", deep_tail),
        ("property suites", property_suites),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let mut c = Criterion::default();
        run(&mut c);
        println!("{} criterion {}: {name}", if c.failed { "FAIL" } else { "PASS" }, i + 1);
        for line in &c.details {
            println!("{line}");
        }
        failures += usize::from(c.failed);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
