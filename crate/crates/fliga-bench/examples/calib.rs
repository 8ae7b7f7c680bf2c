use fliga_bench::scenarios::patch_test;

fn main() {
    let picks = [(1usize, 0.95, 0.6), (2, 0.34, 1.0), (3, 0.30, 1.0)];
    let paper = [(-3.79, -3.04), (-4.80, -4.45), (-7.13, -6.18)];
    for ((p, amp, decay), (tx, ty)) in picks.into_iter().zip(paper) {
        let mut cfg = patch_test::reference_config(p, 1);
        cfg.patch_test.float_amplitude = amp;
        cfg.patch_test.float_decay = decay;
        let (_, r2) = patch_test::run(&cfg).unwrap();
        let mut cfg8 = cfg.clone();
        cfg8.discretization.density_factor = 4;
        let (_, r8) = patch_test::run(&cfg8).unwrap();
        println!(
            "p={p}: 2x ({:+.2},{:+.2}) vs paper ({tx},{ty}) |dx|={:.2} |dy|={:.2};  8x ({:+.2},{:+.2}) gains ({:.2},{:.2})",
            r2.l2_vx, r2.l2_vy,
            (r2.l2_vx - tx).abs(), (r2.l2_vy - ty).abs(),
            r8.l2_vx, r8.l2_vy,
            r2.l2_vx - r8.l2_vx, r2.l2_vy - r8.l2_vy
        );
    }
}
