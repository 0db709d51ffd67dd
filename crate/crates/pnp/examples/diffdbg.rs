// temporary: compare intergrid difference methods on saved study fields
use pnp::grid::{read_field, CellField};
use pnp::harness::intergrid_linf_diff;
use std::fs::File;
use std::io::BufReader;

fn load(path: &str) -> CellField {
    read_field(&mut BufReader::new(File::open(path).unwrap())).unwrap()
}

// box-average restriction for integer refinement ratios
fn box_restrict_diff(coarse: &CellField, fine: &CellField) -> f64 {
    let nc = coarse.grid().cells_per_axis();
    let nf = fine.grid().cells_per_axis();
    assert_eq!(nf % nc, 0);
    let r = nf / nc;
    let mut max = 0.0f64;
    for j in 0..nc {
        for i in 0..nc {
            let mut avg = 0.0;
            for b in 0..r {
                for a in 0..r {
                    avg += fine.values()[(j * r + b) * nf + (i * r + a)];
                }
            }
            avg /= (r * r) as f64;
            max = max.max((coarse.values()[j * nc + i] - avg).abs());
        }
    }
    max
}

// trigonometric (spectral) evaluation of the fine field at coarse centers
fn spectral_diff(coarse: &CellField, fine: &CellField) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    let nc = coarse.grid().cells_per_axis();
    let nf = fine.grid().cells_per_axis();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nf);
    let mut buf: Vec<Complex<f64>> = fine.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    // columns
    let mut col = vec![Complex::new(0.0, 0.0); nf];
    for i in 0..nf {
        for j in 0..nf {
            col[j] = buf[j * nf + i];
        }
        fwd.process(&mut col);
        for j in 0..nf {
            buf[j * nf + i] = col[j];
        }
    }
    let norm = 1.0 / (nf * nf) as f64;
    let tau = std::f64::consts::TAU;
    let length = coarse.grid().axis_length();
    let hc = coarse.grid().spacing();
    let hf = fine.grid().spacing();
    let mut max = 0.0f64;
    // evaluate at coarse centers x_i = origin + (i+1/2) hc; fine modes at
    // exp(i k tau (x - origin - hf/2)/L) with k wrapped to [-nf/2, nf/2)
    for cj in 0..nc {
        for ci in 0..nc {
            let sx = ((ci as f64 + 0.5) * hc - 0.5 * hf) / length;
            let sy = ((cj as f64 + 0.5) * hc - 0.5 * hf) / length;
            let mut acc = Complex::new(0.0, 0.0);
            for kj in 0..nf {
                let ky = if kj <= nf / 2 { kj as f64 } else { kj as f64 - nf as f64 };
                let wy = Complex::from_polar(1.0, tau * ky * sy);
                for ki in 0..nf {
                    let kx = if ki <= nf / 2 { ki as f64 } else { ki as f64 - nf as f64 };
                    let wx = Complex::from_polar(1.0, tau * kx * sx);
                    acc += buf[kj * nf + ki] * wx * wy;
                }
            }
            let v = acc.re * norm;
            max = max.max((coarse.values()[cj * nc + ci] - v).abs());
        }
    }
    max
}

fn main() {
    for field in ["n", "phi"] {
        let c20 = load(&format!("/tmp/study1/r020/{field}_final.txt"));
        let c40 = load(&format!("/tmp/study1/r040/{field}_final.txt"));
        let c60 = load(&format!("/tmp/study1/r060/{field}_final.txt"));
        let bil1 = intergrid_linf_diff(&c20, &c40).unwrap();
        let box1 = box_restrict_diff(&c20, &c40);
        let spec1 = spectral_diff(&c20, &c40);
        let bil2 = intergrid_linf_diff(&c40, &c60).unwrap();
        let spec2 = spectral_diff(&c40, &c60);
        println!("{field}: d1 bilinear {bil1:.4e}  box {box1:.4e}  spectral {spec1:.4e}");
        println!("{field}: d2 bilinear {bil2:.4e}  spectral {spec2:.4e}");
        let astar = (1.0 - 0.25f64) / (1.0 - (1.0 / 60.0f64).powi(2) / (1.0 / 40.0f64).powi(2));
        println!(
            "{field}: order bilinear {:.3}  spectral {:.3}",
            (bil1 / (astar * bil2)).ln() / 2.0f64.ln(),
            (spec1 / (astar * spec2)).ln() / 2.0f64.ln()
        );
    }
}
