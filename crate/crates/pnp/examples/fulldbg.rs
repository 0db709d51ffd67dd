// temporary: spectral diffs/orders over the full study
use pnp::grid::read_field;
use pnp::harness::{richardson_order, spectral_intergrid_linf_diff};
use std::fs::File;
use std::io::BufReader;

fn main() {
    let res = [20usize, 40, 60, 80, 100];
    let load = |r: usize, f: &str| {
        read_field(&mut BufReader::new(
            File::open(format!("/tmp/study_full/r{:03}/{}_final.txt", r, f)).unwrap(),
        ))
        .unwrap()
    };
    let table_n = [1.196e-4, 2.243e-5, 7.851e-6, 3.635e-6];
    let table_phi = [5.508e-2, 1.120e-2, 4.124e-3, 1.976e-3];
    for field in ["n", "p", "phi"] {
        let mut ds = Vec::new();
        for w in res.windows(2) {
            let c = load(w[0], field);
            let f = load(w[1], field);
            ds.push(spectral_intergrid_linf_diff(&c, &f).unwrap());
        }
        print!("{field}: diffs ");
        for (i, d) in ds.iter().enumerate() {
            let t = if field == "phi" { table_phi[i] } else { table_n[i] };
            print!(" {d:.4e} (x{:.2})", d / t);
        }
        println!();
        print!("{field}: orders");
        for j in 0..ds.len() - 1 {
            let h = (1.0 / res[j] as f64, 1.0 / res[j + 1] as f64, 1.0 / res[j + 2] as f64);
            let (_, o) = richardson_order(ds[j], ds[j + 1], h).unwrap();
            print!("  {o:.3}");
        }
        println!();
    }
}
