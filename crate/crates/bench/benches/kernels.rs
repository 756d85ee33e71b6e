use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dsi_bench::{gaussian_matrix, gaussian_vectors, rng};
use dsi_core::analytics::k_representatives;
use dsi_core::desk;
use dsi_core::esmda::esmda_update_with_noise;
use dsi_core::faultgeom::{decompose_traction, slip_tendency, traction, StressTensor, DEFAULT_FRICTION};
use dsi_core::geostat::{PriorGenerator, PriorRanges};
use dsi_core::latentparam::{fit_pca, VaeNet};
use nalgebra::DVector;
use std::hint::black_box;

/// Desk-sized smoother step: 200 members, 70 latent/scalar rows, 640 observations.
fn esmda(c: &mut Criterion) {
    let (ne, nm, nd) = (200, 70, 640);
    let ens = gaussian_matrix(ne, nm, 1);
    let pred = gaussian_matrix(ne, nd, 2);
    let noise = gaussian_matrix(ne, nd, 3);
    let d_obs = vec![0.1; nd];
    let cd = vec![1.0; nd];
    c.bench_function("esmda_update_200x70x640", |b| {
        b.iter(|| esmda_update_with_noise(&ens, &pred, &d_obs, &cd, 7.0, &noise).unwrap())
    });
}

fn pca(c: &mut Criterion) {
    let train = gaussian_vectors(160, 20_000, 4);
    let mut g = c.benchmark_group("pca");
    g.sample_size(10);
    g.bench_function("fit_160x20000_k64", |b| b.iter(|| fit_pca(black_box(&train), 64).unwrap()));
    g.finish();
}

fn vae(c: &mut Criterion) {
    let mut r = rng(5);
    let (input, latent, batch) = (159, 64, 8);
    let net = VaeNet::new(input, &[256, 128], latent, &mut r);
    let a = gaussian_matrix(input, batch, 6);
    let eta = gaussian_matrix(latent, batch, 7);
    let w = DVector::from_element(input, 1.0);
    let resid = vec![0.0; batch];
    c.bench_function("vae_loss_and_grad_batch8", |b| {
        b.iter(|| net.loss_and_grad(&a, &w, &resid, &eta, 100.0))
    });
}

fn slip(c: &mut Criterion) {
    let sigma = StressTensor::diag(20.0, 10.0, 30.0);
    let n = [0.0, 3f64.sqrt() / 2.0, 0.5];
    c.bench_function("slip_tendency", |b| {
        b.iter(|| {
            let d = decompose_traction(traction(black_box(&sigma), n).unwrap(), n, 2.0, 0.9);
            slip_tendency(d.tau, d.sigma_n_eff, DEFAULT_FRICTION)
        })
    });
}

fn medoids(c: &mut Criterion) {
    let pts = gaussian_vectors(200, 64, 8);
    c.bench_function("k_representatives_200x64_k4", |b| b.iter(|| k_representatives(&pts, 4, 9).unwrap()));
}

fn desk_case(c: &mut Criterion) {
    let sc = desk::scenario().unwrap();
    let gen = PriorGenerator::new(&desk::variogram(), &PriorRanges::default(), sc.grid.dims()).unwrap();
    let mut g = c.benchmark_group("desk");
    g.sample_size(10);
    g.bench_function("prior_realization", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            gen.realization(1, i).unwrap()
        })
    });
    g.bench_function("simulate", |b| {
        b.iter_batched(|| gen.realization(1, 0).unwrap(), |m| sc.simulate(&m).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, esmda, pca, vae, slip, medoids, desk_case);
criterion_main!(benches);
