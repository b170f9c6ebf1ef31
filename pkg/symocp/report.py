"""Console tables, CSV curve files and structured reports."""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import yaml
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .assembly import SDPInstance
from .ocp import ValidationReport
from .recovery import FeasibilityVerdict, Outcome, RecoveredCurve, RecoveryReport
from .solver import SolveResult

CSV_DIGITS = 12


def fmt(value: Optional[float]) -> str:
    """12 significant digits; empty for missing values."""
    if value is None:
        return ""
    return f"{value:.{CSV_DIGITS}g}"


def solve_row(inst: SDPInstance, result: SolveResult, wall_time: float) -> Dict[str, Any]:
    return {
        "problem": inst.name,
        "kind": inst.kind.value,
        "d": 2 * inst.order,
        "status": result.status.code.value,
        "bound": result.objective,
        "wall_time": wall_time,
        "variables": inst.num_variables,
        "blocks": " ".join(str(n) for n in sorted(inst.block_sizes, reverse=True)),
    }


def print_solve_rows(console: Console, rows: Sequence[Dict[str, Any]]) -> None:
    table = Table(title="Cost bounds", show_header=True, header_style="bold magenta")
    table.add_column("Problem", style="cyan")
    table.add_column("Kind", style="green")
    table.add_column("d", justify="right")
    table.add_column("Status")
    table.add_column("Bound", style="yellow", justify="right")
    table.add_column("Time (s)", justify="right")
    table.add_column("Variables", justify="right")
    table.add_column("Largest blocks", style="dim")
    for row in rows:
        status_style = "green" if row["status"] == "Optimal" else "red"
        blocks = row["blocks"].split()
        shown = " ".join(blocks[:6]) + (" ..." if len(blocks) > 6 else "")
        table.add_row(row["problem"], row["kind"], str(row["d"]),
                      f"[{status_style}]{row['status']}[/{status_style}]",
                      f"{row['bound']:.6f}", f"{row['wall_time']:.2f}",
                      str(row["variables"]), shown)
    console.print(table)


def write_rows_csv(path: Path, rows: Sequence[Dict[str, Any]]) -> None:
    columns = ["problem", "kind", "d", "status", "bound", "wall_time", "variables", "blocks"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c]
                             for c in columns])


def write_curve_csv(path: Path, curve: RecoveredCurve) -> None:
    """Columns (t, value, label)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "value", "label"])
        for t, value in zip(curve.grid, curve.values):
            writer.writerow([fmt(float(t)), fmt(float(value)), curve.label])


def _slug(label: str) -> str:
    keep = []
    for ch in label:
        if ch.isalnum():
            keep.append(ch)
        elif ch == "-":
            keep.append("m")
        elif ch == "+":
            keep.append("p")
        elif ch in "^*()[]":
            keep.append("_")
    return "".join(keep).strip("_") or "curve"


def write_recovery(out_dir: Path, report: RecoveryReport) -> List[Path]:
    """One CSV per curve and candidate, plus report.yaml; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    curves: Iterable[RecoveredCurve] = list(report.curves.values())
    for group in report.candidates.values():
        curves = list(curves) + list(group)
    for curve in curves:
        path = out_dir / f"{report.problem}_{_slug(curve.label)}.csv"
        write_curve_csv(path, curve)
        written.append(path)
    path = out_dir / "report.yaml"
    write_yaml(path, report.to_dict())
    written.append(path)
    return written


def write_yaml(path: Path, data: Dict[str, Any]) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(data, f, default_flow_style=False, sort_keys=False)


def print_recovery(console: Console, report: RecoveryReport) -> None:
    table = Table(title=f"{report.variant}/{report.mode} on {report.problem} (d={2 * report.k})",
                  show_header=True, header_style="bold magenta")
    table.add_column("Stage", style="cyan")
    table.add_column("Status")
    table.add_column("Objective", style="yellow", justify="right")
    table.add_column("Variables", justify="right")
    table.add_column("Time (s)", justify="right")
    for stage in report.stages:
        table.add_row(stage.name, stage.status["status"],
                      f"{stage.status['primal_objective']:.6f}", str(stage.variables),
                      f"{stage.seconds:.2f}")
    console.print(table)
    console.print(f"[bold]Cost bound:[/bold] {report.bound:.6f}")
    if report.final_time is not None:
        console.print(f"[bold]Recovered final time:[/bold] {report.final_time:.6f}")
    console.print(f"[dim]Curves:[/dim] {', '.join(sorted(report.curves))}")
    for key, group in sorted(report.candidates.items()):
        console.print(f"[dim]Branch candidates for {key}:[/dim] {len(group)}")


def print_verdict(console: Console, verdict: FeasibilityVerdict, candidate: str) -> None:
    style = {Outcome.ACCEPT: "green", Outcome.REJECT: "red",
             Outcome.INCONCLUSIVE: "yellow"}[verdict.outcome]
    lines = [f"[{style}]{verdict.outcome.value}[/{style}] candidate {candidate!r}",
             f"lower bound {verdict.bound:.6f}"]
    if verdict.gap is not None:
        lines.append(f"cost gap {verdict.gap:.3e}")
    lines.append(f"solver status {verdict.status['status']}")
    console.print(Panel("\n".join(lines), title="Feasibility test", border_style=style))


def print_validation(console: Console, name: str, report: ValidationReport) -> None:
    if report.passed:
        console.print(f"[green]✅ {name}: symmetry validated "
                      f"({len(report.checks)} group elements, tol {report.tol:g})[/green]")
        return
    console.print(f"[red]❌ {name}: symmetry validation failed[/red]")
    for failure in report.failures():
        console.print(f"  • {failure}")
