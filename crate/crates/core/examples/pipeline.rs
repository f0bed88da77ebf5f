//! Library-level walk through the full pipeline on the linear reference
//! instance: relax, extract the constant kernel, close the loop, compare
//! with the LQR baseline.
//!
//! ```text
//! cargo run --release -p momheat-core --example pipeline
//! ```

use momheat_core::extraction::{extract, ControllerForm, ControllerSpec};
use momheat_core::lqr::{lqr_gain, LqrFeedback};
use momheat_core::pdesim::{run_closed_loop, Mesh, SimOptions};
use momheat_core::problem::{paper_instance_linear, RelaxationConfig};
use momheat_core::sdpsolver::{self, PseudoMoments, SdpOptions};
use momheat_core::weakform;

fn main() {
    let problem = paper_instance_linear();
    let relax = RelaxationConfig::new(6);
    let program = weakform::assemble(&problem, &relax).unwrap();
    println!(
        "degree-6 relaxation: {} rows, {} moments, {} cone blocks",
        program.num_rows(),
        program.num_cols(),
        program.cones.len()
    );

    let conic = sdpsolver::ConicProblem::from_program(&program);
    let options = SdpOptions {
        tol: 1e-6,
        cone_slack: 1e-6,
        ..Default::default()
    };
    let solution = sdpsolver::solve_conic(&conic, &options).unwrap();
    println!(
        "solve: {} after {} iterations, lower bound {:.6e}",
        solution.status.name(),
        solution.iterations,
        solution.objective
    );

    let moments = PseudoMoments::from_solution(&problem, &relax, &program, &solution);
    let spec = ControllerSpec {
        form: ControllerForm::Linear { m: 0 },
        p: 5,
    };
    let controller = extract(&moments, &spec).unwrap();
    println!(
        "extracted constant kernel gamma = {:.4} (residual {:.2e})",
        controller.gamma[0], controller.residual
    );

    let mesh = Mesh::uniform(0.01).unwrap();
    let sim = SimOptions {
        dt: 1e-4,
        horizon: 1.0,
        extend_until_increment: Some(1e-9),
        ..Default::default()
    };
    let moment_run = run_closed_loop(&problem, &mesh, &controller, &sim).unwrap();

    let lqr = lqr_gain(&problem, &mesh).unwrap();
    let lqr_fb = LqrFeedback::new(&lqr, &problem, &mesh);
    let lqr_run = run_closed_loop(&problem, &mesh, &lqr_fb, &sim).unwrap();

    println!("moment controller cost {:.6e}", moment_run.cost);
    println!("lqr baseline cost      {:.6e}", lqr_run.cost);
    println!(
        "relative gap           {:+.3}%",
        100.0 * (moment_run.cost - lqr_run.cost) / lqr_run.cost
    );
    println!(
        "decay |y(1)|/|y0|: moment {:.2e}, lqr {:.2e}",
        moment_run.sup_norm_at(1.0) / moment_run.initial_sup_norm(),
        lqr_run.sup_norm_at(1.0) / lqr_run.initial_sup_norm()
    );
}
