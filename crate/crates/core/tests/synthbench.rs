use mtdistill::datastore::{make_splits, Labels, DEFAULT_RATIOS};
use mtdistill::numkit::Matrix;
use mtdistill::probe::ProbeConfig;
use mtdistill::rng;
use mtdistill::synthbench::{
    empirical_disagreement, generate_teachers, generate_world, preset, run_fixture, FixtureSpec, TeacherSpec,
    ViewKind, WorldSpec,
};
use mtdistill::Error;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn centered(m: &Matrix) -> DMatrix<f64> {
    let means = m.column_means();
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c) - means[c])
}

/// Largest canonical correlation between the column spaces of `a` and `b`.
fn max_canonical_correlation(a: &Matrix, b: &Matrix) -> f64 {
    let (x, y) = (centered(a), centered(b));
    let cxx = x.transpose() * &x;
    let cyy = y.transpose() * &y;
    let cxy = x.transpose() * &y;
    let lx = cxx.cholesky().unwrap().l();
    let ly = cyy.cholesky().unwrap().l();
    let lx_inv = lx.try_inverse().unwrap();
    let ly_inv = ly.try_inverse().unwrap();
    let m = lx_inv * cxy * ly_inv.transpose();
    m.singular_values().max()
}

#[test]
fn cca_oracle_sees_shared_structure() {
    let mut r = rng::stream(1, 0);
    let a = Matrix::from_fn(500, 3, |_, _| StandardNormal.sample(&mut r));
    let b = Matrix::from_fn(500, 3, |i, c| if c == 0 { a.get(i, 1) } else { StandardNormal.sample(&mut r) });
    assert!(max_canonical_correlation(&a, &b) > 0.999);
}

#[test]
fn worlds_are_seed_deterministic() {
    let spec = WorldSpec::new(300, 8, 16, 4, 5);
    let a = generate_world(&spec).unwrap();
    let b = generate_world(&spec).unwrap();
    assert_eq!(a, b);
    let c = generate_world(&WorldSpec { seed: 6, ..spec }).unwrap();
    assert_ne!(a.latent, c.latent);
}

#[test]
fn latent_means_respect_the_clt_bound() {
    let n = 10_000;
    let world = generate_world(&WorldSpec::new(n, 6, 8, 2, 3)).unwrap();
    let bound = 5.0 / (n as f64).sqrt();
    for m in world.latent.column_means() {
        assert!(m.abs() < bound, "{m}");
    }
}

#[test]
fn binary_prevalence_is_bounded() {
    for seed in 0..10 {
        let world = generate_world(&WorldSpec::new(400, 12, 16, 8, seed)).unwrap();
        assert_eq!(world.tasks.len(), 8);
        for t in &world.tasks {
            let p = t.prevalence().unwrap();
            assert!((0.1..=0.9).contains(&p), "{} {p}", t.name);
        }
    }
}

#[test]
fn tasks_cover_every_group() {
    let spec = preset("standard", 7).unwrap();
    let world = generate_world(&spec.world).unwrap();
    for t in &spec.teachers {
        assert!(world.tasks.iter().any(|task| task.coords == t.subset));
    }
    assert!(world.tasks.iter().any(|task| task.coords.len() == 6));
}

#[test]
fn identity_view_without_noise_is_the_latent() {
    let spec = WorldSpec::new(150, 5, 8, 2, 1);
    let world = generate_world(&spec).unwrap();
    let teacher = TeacherSpec {
        name: "all".into(),
        subset: (0..5).collect(),
        dim: 5,
        view: ViewKind::Identity,
        noise: 0.0,
        seed: 0,
    };
    let data = generate_teachers(&world, &[teacher]).unwrap();
    assert_eq!(data.teachers[0].embeddings, world.latent);
}

#[test]
fn identical_specs_give_identical_views() {
    let spec = preset("small", 2).unwrap();
    let world = generate_world(&spec.world).unwrap();
    let mut twin = spec.teachers[0].clone();
    twin.name = "twin".into();
    let data = generate_teachers(&world, &[spec.teachers[0].clone(), twin]).unwrap();
    assert_eq!(data.teachers[0].embeddings, data.teachers[1].embeddings);
}

#[test]
fn disjoint_teachers_are_nearly_uncorrelated() {
    let spec = preset("standard", 7).unwrap();
    let world = generate_world(&spec.world).unwrap();
    let data = generate_teachers(&world, &spec.teachers).unwrap();
    for i in 0..data.num_teachers() {
        for j in i + 1..data.num_teachers() {
            let rho = max_canonical_correlation(&data.teachers[i].embeddings, &data.teachers[j].embeddings);
            assert!(rho < 0.3, "teachers {i},{j}: {rho}");
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(generate_world(&WorldSpec::new(50, 8, 8, 2, 0)).is_err());
    assert!(generate_world(&WorldSpec::new(200, 3, 8, 2, 0)).is_err());
    let world = generate_world(&WorldSpec::new(200, 6, 8, 2, 0)).unwrap();
    let bad = TeacherSpec {
        name: "bad".into(),
        subset: vec![2, 9],
        dim: 4,
        view: ViewKind::RandomMlp { hidden: 8, gain: 1.0 },
        noise: 0.1,
        seed: 0,
    };
    let err = generate_teachers(&world, &[bad]).unwrap_err();
    assert!(err.to_string().contains("coordinate 9"), "{err}");
    assert!(preset("huge", 0).is_err());
}

fn quick_probe() -> ProbeConfig {
    ProbeConfig {
        hidden: 16,
        max_epochs: 15,
        ..ProbeConfig::default()
    }
}

#[test]
fn identical_embeddings_never_disagree() {
    let mut r = rng::stream(8, 0);
    let x = Matrix::from_fn(300, 3, |_, _| StandardNormal.sample(&mut r));
    let y = Labels::Classes((0..300).map(|i| (x.get(i, 0) + 0.3 * x.get(i, 2) > 0.0) as u32).collect());
    let splits = make_splits(300, DEFAULT_RATIOS, 0).unwrap();
    let rep = empirical_disagreement(&x, &[x.clone(), x.clone()], &y, &splits, &quick_probe(), None).unwrap();
    assert_eq!(rep.rates, vec![0.0, 0.0]);
    assert_eq!(rep.mean_rate, 0.0);
}

#[test]
fn independent_embeddings_disagree_near_half() {
    let mut r = rng::stream(9, 0);
    let n = 1000;
    let s = Matrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut r));
    let t = Matrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut r));
    let y = Labels::Classes((0..n).map(|_| r.random_range(0..2)).collect());
    let splits = make_splits(n, DEFAULT_RATIOS, 1).unwrap();
    let rep = empirical_disagreement(&s, &[t], &y, &splits, &quick_probe(), None).unwrap();
    assert!((0.3..=0.7).contains(&rep.rates[0]), "{}", rep.rates[0]);
    assert!(matches!(
        empirical_disagreement(&s, std::slice::from_ref(&s), &Labels::Regression(vec![0.0; n]), &splits, &quick_probe(), None),
        Err(Error::Usage(_))
    ));
}

#[test]
fn small_fixture_runs_end_to_end() {
    let spec = preset("small", 3).unwrap();
    let back = FixtureSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(back, spec);
    let (world, report) = run_fixture(&spec, &mut |_| {}).unwrap();
    assert_eq!(report.cells.len(), spec.cells.len());
    let embedders = report.metrics.embedders();
    assert_eq!(embedders.len(), spec.cells.len());
    for cell in &spec.cells {
        assert!(embedders.contains(&cell.name().as_str()));
    }
    let expected_runs = spec.cells.len() * world.tasks.len() * spec.probe.seeds.len() * 2;
    assert_eq!(report.metrics.runs.len(), expected_runs);
    for outcome in report.cells.iter().filter(|c| c.bound.is_some()) {
        for (before, after) in outcome.initial_val_terms.iter().zip(&outcome.final_val_terms) {
            assert!(after < before, "{}: {before} -> {after}", outcome.name);
        }
    }
    let (_, again) = run_fixture(&spec, &mut |_| {}).unwrap();
    assert_eq!(again.metrics.to_csv(), report.metrics.to_csv());
}
