use fliga_bench::config::AmVariant;
use fliga_bench::scenarios::am;
use fliga::solver::contact_contributions;

fn main() {
    let mut cfg = am::reference_config(AmVariant::Straight, 1);
    cfg.am.v_in = 0.0;
    cfg.am.nozzle_speed = 0.0;
    cfg.am.weissenberg = 0.0;
    cfg.refinement = None;
    let mut sim = am::build_simulation(&cfg).unwrap();
    let u0 = vec![0.0; sim.num_dofs()];
    let (f, _) = contact_contributions(&sim.patch, &sim.point_set, sim.contact.as_ref().unwrap(), &u0).unwrap();
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("contact force at rest: max {fmax:.3e}");
    // max penetration over boundary points
    let mut pmax = -1e9f64;
    for row in [0usize, sim.point_set.rows().len()-1] {
        for pt in &sim.point_set.rows()[row].points {
            if let Some((p, _)) = sim.contact.as_ref().unwrap().penetration(pt.phys) {
                pmax = pmax.max(p);
            }
        }
    }
    println!("max penetration at rest: {pmax:.4e}");
    sim.solve_current().unwrap();
    let u = sim.current_u();
    let vmax = u[..sim.num_velocity_dofs()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max |v| after solve: {vmax:.3e}");
    // largest velocity dof location
    let nv = sim.num_velocity_dofs();
    let (mut best, mut arg) = (0.0f64, 0usize);
    for (d, &v) in u[..nv].iter().enumerate() { if v.abs() > best { best = v.abs(); arg = d; } }
    let m = arg / 2;
    let (i, j) = sim.patch.unpack_index(m).unwrap();
    println!("largest at control ({i},{j}) comp {} = {best:.3e}, pos {:?}", arg % 2, sim.patch.control(j, i));
}
