use nalgebra::DVector;
use sgflow::corpus;
use sgflow::integrate::integrate;
use sgflow::{FlowSpecF64, StepperSpecF64, TrajectoryF64};
use sgflow_cli::output::{read_trajectory, write_trajectory, RUNNING};

fn assert_round_trip(traj: &TrajectoryF64) {
    let mut buf = Vec::new();
    write_trajectory(traj, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(!text.contains('\r'));
    let table = read_trajectory(buf.as_slice()).unwrap();
    assert_eq!(table.times.len(), traj.len());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&table.times), bits(&traj.times));
    assert_eq!(bits(&table.f), bits(&traj.f));
    assert_eq!(bits(&table.speed), bits(&traj.speed));
    assert_eq!(bits(&table.max_g), bits(&traj.max_g));
    assert_eq!(bits(&table.norm_h), bits(&traj.norm_h));
    for (a, b) in table.states.iter().zip(&traj.states) {
        assert_eq!(bits(a.as_slice()), bits(b.as_slice()));
    }
    assert_eq!(table.status.last().unwrap(), traj.status.as_str());
    assert!(table.status[..table.status.len() - 1].iter().all(|s| s == RUNNING));
}

#[test]
fn trajectories_round_trip_bit_for_bit() {
    let fig3 = corpus::fig3::<f64>();
    let x0 = fig3.default_x0.clone();
    for spec in [FlowSpecF64::safe_gradient(1.0), FlowSpecF64::L2Penalty { eps_pen: 10.0 }, FlowSpecF64::SaddlePoint] {
        let traj = integrate(spec, &fig3.problem, &x0, &StepperSpecF64::adaptive(5.0)).unwrap();
        assert_round_trip(&traj);
    }
    // No inequalities: max_g is −∞ in every row.
    let sphere = corpus::sphere::<f64>();
    let x0 = DVector::from_vec(vec![0.3, -1.1, 0.7]);
    let traj = integrate(FlowSpecF64::safe_gradient(2.0), &sphere.problem, &x0, &StepperSpecF64::rk4(1e-2, 1.0)).unwrap();
    assert!(traj.max_g.iter().all(|g| *g == f64::NEG_INFINITY));
    assert_round_trip(&traj);
}

#[test]
fn rejects_foreign_csv() {
    assert!(read_trajectory("a,b\n1,2\n".as_bytes()).is_err());
    assert!(read_trajectory("t,x_1,f,speed,max_g,norm_h,status\n0,zz,1,1,1,1,running\n".as_bytes()).is_err());
}
