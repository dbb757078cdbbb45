use highs::{Col, HighsModelStatus, Model, RowProblem, SolvedModel};

use super::{LinearProgram, LpResult, LpStatus, Sense};

fn build(lp: &LinearProgram) -> Option<(Model, Vec<Col>)> {
    let mut pb = RowProblem::default();
    let cols: Vec<Col> = lp
        .objective
        .iter()
        .zip(&lp.lower)
        .zip(&lp.upper)
        .map(|((&c, &l), &u)| pb.add_column(c, l..=u))
        .collect();
    for row in &lp.constraints {
        let factors: Vec<_> = row.coeffs.iter().map(|&(j, a)| (cols[j], a)).collect();
        pb.add_row(row.lower..=row.upper, factors);
    }
    let sense = match lp.sense {
        Sense::Minimize => highs::Sense::Minimise,
        Sense::Maximize => highs::Sense::Maximise,
    };
    let mut model = match pb.try_optimise(sense) {
        Ok(m) => m,
        Err(status) => {
            log::warn!("HiGHS rejected the model: {status:?}");
            return None;
        }
    };
    model.make_quiet();
    model.set_option("primal_feasibility_tolerance", 1e-9);
    model.set_option("dual_feasibility_tolerance", 1e-9);
    model.set_option("threads", 1);
    model.set_option("random_seed", 0);
    Some((model, cols))
}

fn extract(lp: &LinearProgram, solved: &SolvedModel) -> LpResult {
    match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
            let x = solved.get_solution().columns().to_vec();
            let objective = lp.objective_value(&x);
            LpResult {
                status: LpStatus::Optimal,
                x,
                objective,
            }
        }
        HighsModelStatus::Infeasible => LpResult::without_solution(LpStatus::Infeasible),
        HighsModelStatus::Unbounded => LpResult::without_solution(LpStatus::Unbounded),
        HighsModelStatus::UnboundedOrInfeasible => {
            // Presolve cannot tell the two apart; the dense backend can.
            LpResult::without_solution(LpStatus::NumericalFailure)
        }
        other => {
            log::warn!("HiGHS returned {other:?}");
            LpResult::without_solution(LpStatus::NumericalFailure)
        }
    }
}

pub fn solve_highs(lp: &LinearProgram) -> LpResult {
    let Some((model, _)) = build(lp) else {
        return LpResult::without_solution(LpStatus::NumericalFailure);
    };
    match model.try_solve() {
        Ok(solved) => extract(lp, &solved),
        Err(status) => {
            log::warn!("HiGHS failed: {status:?}");
            LpResult::without_solution(LpStatus::NumericalFailure)
        }
    }
}
