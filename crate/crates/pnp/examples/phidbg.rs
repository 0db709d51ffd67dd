// temporary: structure of the phi intergrid difference
use pnp::grid::{read_field, CellField, GridSpec};
use std::fs::File;
use std::io::BufReader;
use rustfft::{num_complex::Complex, FftPlanner};

fn load(path: &str) -> CellField {
    read_field(&mut BufReader::new(File::open(path).unwrap())).unwrap()
}

fn spectral_to_coarse(coarse_grid: GridSpec, fine: &CellField) -> CellField {
    let nc = coarse_grid.cells_per_axis();
    let nf = fine.grid().cells_per_axis();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nf);
    let mut buf: Vec<Complex<f64>> = fine.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let mut col = vec![Complex::new(0.0, 0.0); nf];
    for i in 0..nf {
        for j in 0..nf { col[j] = buf[j * nf + i]; }
        fwd.process(&mut col);
        for j in 0..nf { buf[j * nf + i] = col[j]; }
    }
    let norm = 1.0 / (nf * nf) as f64;
    let tau = std::f64::consts::TAU;
    let length = coarse_grid.axis_length();
    let hc = coarse_grid.spacing();
    let hf = fine.grid().spacing();
    let mut out = CellField::zeros(coarse_grid);
    for cj in 0..nc {
        let sy = ((cj as f64 + 0.5) * hc - 0.5 * hf) / length;
        for ci in 0..nc {
            let sx = ((ci as f64 + 0.5) * hc - 0.5 * hf) / length;
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
            out.values_mut()[cj * nc + ci] = acc.re * norm;
        }
    }
    out
}

fn main() {
    let p20 = load("/tmp/study1/r020/phi_final.txt");
    let p40 = load("/tmp/study1/r040/phi_final.txt");
    let n20 = load("/tmp/study1/r020/n_final.txt");
    println!("|phi_20|_inf = {:.4}, |phi_20|_2 = {:.4}", p20.linf_norm(), p20.l2_norm());
    println!("n_20: min {:.3e} max {:.3e}", n20.min_value(), n20.max_value());
    let i40 = spectral_to_coarse(p20.grid(), &p40);
    let delta = p20.sub(&i40);
    println!("delta_phi: inf {:.4e}  l2 {:.4e}  mean {:.2e}", delta.linf_norm(), delta.l2_norm(), delta.mean());
    // where is the max?
    let nc = p20.grid().cells_per_axis();
    let (mut best, mut bi, mut bj) = (0.0f64, 0, 0);
    for j in 0..nc { for i in 0..nc {
        let v = delta.values()[j*nc+i].abs();
        if v > best { best = v; bi = i; bj = j; }
    }}
    let x = p20.grid().cell_center(bj*nc+bi);
    println!("max |delta| at ({:.3},{:.3})", x[0], x[1]);
    // profile along the diagonal row of the max
    let row: Vec<String> = (0..nc).step_by(2).map(|i| format!("{:+.2e}", delta.values()[bj*nc+i])).collect();
    println!("row j={}: {}", bj, row.join(" "));
    // also: difference of n-driven charge part: check delta of laplacian(phi)
    let lap20 = pnp::grid::laplacian(&p20);
    println!("|lap phi_20|_inf = {:.3}", lap20.linf_norm());
}
