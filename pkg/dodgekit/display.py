"""
Rich console rendering for optimizer reports, intrinsic-dimension verdicts and studies.

Only the human-facing view lives here; files written by the CLI never depend on it.
"""

from typing import Optional

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from dodgekit.logic.intrinsic_dim import IntrinsicDimReport, Recommendation
from dodgekit.logic.optimizers import OptimizerReport
from dodgekit.services.rigs import StudyResult, median_table

console = Console()


def show_best(report: OptimizerReport, out: Optional[Console] = None) -> None:
    out = out or console
    best = report.best
    table = Table(title="Best configuration", box=box.ROUNDED, show_header=True,
                  header_style="bold cyan")
    table.add_column("Component", style="cyan")
    table.add_column("Node")
    table.add_column("Parameters")
    params = best.config.to_dict()
    for role in ("preproc", "learner"):
        values = ", ".join(f"{k}={v}" for k, v in params[f"{role}_params"].items())
        table.add_row(role, params[f"{role}_node"], values or "-")
    out.print(table)

    score = best.goals[report.primary]
    out.print(f"best {report.primary}: {score:.6f} (trial {best.index}, "
              f"{report.evaluations_used} evaluations, {report.n_redundant} redundant)",
              soft_wrap=True)
    out.print(f"config: {best.config.describe()}", soft_wrap=True)


def show_intrinsic(report: IntrinsicDimReport, verdict: Recommendation,
                   out: Optional[Console] = None) -> None:
    out = out or console
    style = {
        Recommendation.RECOMMENDED: "green",
        Recommendation.INCONCLUSIVE: "yellow",
        Recommendation.NOT_RECOMMENDED: "red",
    }[verdict]
    body = (f"rows measured: {report.n_used} of {report.n_rows}\n"
            f"radii used: {sum(report.used)} of {len(report.radii)}")
    if report.degenerate:
        body += "\n[yellow]degenerate input: estimate forced to 0[/yellow]"
    if not report.reliable:
        body += "\n[yellow]estimate above 20: the estimator underestimates here[/yellow]"
    out.print(Panel(body, title="Intrinsic dimensionality", border_style=style))
    out.print(f"intrinsic dimension: {report.dimension:.3f}", soft_wrap=True)
    out.print(verdict.message, soft_wrap=True)


def show_study(result: StudyResult, out: Optional[Console] = None) -> None:
    out = out or console
    medians = median_table(result)
    score_table = Table(title="Median test score", box=box.ROUNDED, header_style="bold cyan")
    score_table.add_column("Dataset", style="cyan")
    for name in result.optimizer_names:
        score_table.add_column(name, justify="right")
    for d in result.dataset_names:
        score_table.add_row(d, *(f"{medians[d][o]:.3f}" for o in result.optimizer_names))
    out.print(score_table)

    wtl = Table(title="Win / tie / loss", box=box.ROUNDED, header_style="bold cyan")
    for column in ("Optimizer", "Win", "Tie", "Loss", "Win+Tie", "All"):
        wtl.add_column(column, justify="left" if column == "Optimizer" else "right")
    for name, (w, t, l) in result.summary.items():
        wtl.add_row(name, str(w), str(t), str(l), str(w + t), str(w + t + l))
    out.print(wtl)
