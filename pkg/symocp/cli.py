"""Main CLI entry point for symocp."""

import functools
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from .assembly import (
    AssemblyError,
    Kind,
    SDPInstance,
    assemble,
    assemble_lift,
    assemble_selection,
    random_selection_polynomials,
)
from .benchmarks import BUILTIN_PROBLEMS, OracleError, builtin_problem, candidate_tables
from .config import ConfigurationManager
from .ocp import OCProblem, OrderError, RelaxationOrder, validate_symmetry
from .parsing import PolynomialSyntaxError
from .poly import DimensionError
from .problem_file import ProblemFileError, load_problem
from .recovery import (
    Outcome,
    RecoveryConfig,
    RecoveryError,
    Variant,
    Mode,
    feasibility_test,
    run_algorithm,
)
from .report import (
    print_recovery,
    print_solve_rows,
    print_validation,
    print_verdict,
    solve_row,
    write_recovery,
    write_rows_csv,
    write_yaml,
)
from .solver import BACKENDS, SolverConfig, extract_moments, solve

logger = logging.getLogger(__name__)

KINDS = [kind.value for kind in Kind]
MODES = ["solve", "compare", "select", "lift", "recover", "feastest"]

_USER_ERRORS = (
    AssemblyError,
    DimensionError,
    OracleError,
    OrderError,
    PolynomialSyntaxError,
    ProblemFileError,
    RecoveryError,
    ValueError,
)


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=verbose, show_path=False)],
        force=True,
    )


def handle_errors(func: Callable) -> Callable:
    """Print domain errors in red and exit with status 1."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except _USER_ERRORS as e:
            Console(stderr=True).print(f"[red]Error: {e}[/red]")
            sys.exit(1)

    return wrapper


@click.group(invoke_without_command=True)
@click.option('--problem', '-p', type=click.Choice(sorted(BUILTIN_PROBLEMS)), default='integrator',
              help='Built-in problem')
@click.option('--file', '-f', 'problem_file', type=click.Path(exists=True, dir_okay=False),
              help='Problem file (YAML or JSON); overrides --problem')
@click.option('--kappa', type=float, help='Qubit coupling strength')
@click.option('--alpha', type=float, help='Qubit control angle (radians)')
@click.option('--tmax', type=float, help='Upper bound on the free final time')
@click.option('--backend', type=click.Choice(BACKENDS), help='Conic solver backend')
@click.option('--tol', type=float, help='Solver tolerance')
@click.option('--max-iter', type=int, help='Solver iteration limit')
@click.option('--seed', type=int, help='Seed of the selection polynomials')
@click.option('--out', '-o', type=click.Path(file_okay=False), help='Output directory')
@click.option('--config-dir', help='Configuration directory')
@click.option('--verbose', '-v', is_flag=True, help='Log solver progress')
@click.option('--version', is_flag=True, help='Show version information')
@click.pass_context
def main(ctx, problem: str, problem_file: Optional[str], kappa: Optional[float],
         alpha: Optional[float], tmax: Optional[float], backend: Optional[str],
         tol: Optional[float], max_iter: Optional[int], seed: Optional[int],
         out: Optional[str], config_dir: Optional[str], verbose: bool, version: bool):
    """symocp - symmetry-reduced moment relaxations for polynomial optimal control."""

    console = Console()
    if version:
        from . import __version__
        console.print(f"symocp v{__version__}")
        return

    _setup_logging(verbose)
    config = ConfigurationManager(config_dir)
    try:
        solver_config = SolverConfig.from_manager(config, backend=backend, tol=tol,
                                                  max_iter=max_iter, verbose=verbose)
    except ValueError as e:
        console.print(f"[red]Configuration Error: {e}[/red]")
        sys.exit(1)

    ctx.obj = {
        'config': config,
        'console': console,
        'solver_config': solver_config,
        'problem': problem,
        'problem_file': problem_file,
        'kappa': kappa,
        'alpha': alpha,
        'tmax': tmax if tmax is not None else config.get_tmax(),
        'seed': seed,
        'out': Path(out) if out else None,
    }

    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())


def _load(obj: Dict[str, Any]) -> OCProblem:
    if obj['problem_file']:
        return load_problem(obj['problem_file'])
    return builtin_problem(obj['problem'], obj['kappa'], obj['alpha'], obj['tmax'])


def _order(d: int, prob: OCProblem) -> int:
    return RelaxationOrder.from_d(d, prob).k


def _solve_rows(obj: Dict[str, Any], instances: List[SDPInstance]) -> List[Dict[str, Any]]:
    rows = []
    for inst in instances:
        started = time.perf_counter()
        result = solve(inst, obj['solver_config'])
        rows.append(solve_row(inst, result, time.perf_counter() - started))
    return rows


def _finish_rows(obj: Dict[str, Any], rows: List[Dict[str, Any]], filename: str) -> None:
    print_solve_rows(obj['console'], rows)
    if obj['out'] is not None:
        obj['out'].mkdir(parents=True, exist_ok=True)
        write_rows_csv(obj['out'] / filename, rows)
    if any(row['status'] != 'Optimal' for row in rows):
        sys.exit(1)


order_option = click.option('--order', '-d', 'd', type=int, required=True,
                            help='Relaxation degree d = 2k')
kind_option = click.option('--kind', '-k', type=click.Choice(KINDS), default='symmetric',
                           help='Relaxation kind')


@main.command('solve')
@order_option
@kind_option
@click.option('--compare', is_flag=True, help='Solve dense and symmetric relaxations side by side')
@click.pass_context
@handle_errors
def solve_cmd(ctx, d: int, kind: str, compare: bool):
    """Compute the lower bound of a relaxation."""

    obj = ctx.obj
    prob = _load(obj)
    k = _order(d, prob)
    kinds = [Kind.DENSE, Kind.SYMMETRIC] if compare else [Kind(kind)]
    rows = _solve_rows(obj, [assemble(each, prob, k) for each in kinds])
    if compare and all(row['status'] == 'Optimal' for row in rows):
        dense, symmetric = rows
        obj['console'].print(
            f"[dim]bound difference {abs(dense['bound'] - symmetric['bound']):.2e}, "
            f"variable ratio {symmetric['variables'] / dense['variables']:.3f}[/dim]")
    _finish_rows(obj, rows, f"{prob.name}_d{d}_{'compare' if compare else kind}.csv")


@main.command()
@order_option
@kind_option
@click.option('--slack', type=float, help='Slack on the cost cap')
@click.pass_context
@handle_errors
def select(ctx, d: int, kind: str, slack: Optional[float]):
    """Solve the bound, then an extreme-point selection program at that cost."""

    obj = ctx.obj
    config = obj['config']
    prob = _load(obj)
    k = _order(d, prob)
    kind_ = Kind(kind)
    seed = obj['seed'] if obj['seed'] is not None else config.get_seed()
    slack = slack if slack is not None else config.get_slack()

    bound_inst = assemble(kind_, prob, k)
    rows = _solve_rows(obj, [bound_inst])
    if rows[0]['status'] == 'Optimal':
        P, Ptilde = random_selection_polynomials(prob, seed, symmetric=kind_ is not Kind.DENSE)
        inst = assemble_selection(kind_, prob, k, P, Ptilde, rows[0]['bound'], slack)
        rows += _solve_rows(obj, [inst])
        rows[-1]['kind'] = f"{kind_.value}/select"
    _finish_rows(obj, rows, f"{prob.name}_d{d}_select.csv")


@main.command()
@order_option
@click.option('--slack', type=float, help='Slack on the cost cap')
@click.pass_context
@handle_errors
def lift(ctx, d: int, slack: Optional[float]):
    """Lift the symmetric solution back to a dense one (program R_k)."""

    obj = ctx.obj
    config = obj['config']
    prob = _load(obj)
    k = _order(d, prob)
    seed = obj['seed'] if obj['seed'] is not None else config.get_seed()
    slack = slack if slack is not None else config.get_slack()

    started = time.perf_counter()
    result = solve(assemble(Kind.SYMMETRIC, prob, k), obj['solver_config'])
    rows = [solve_row(result.instance, result, time.perf_counter() - started)]
    if result.ok:
        z = extract_moments(result)
        P, Ptilde = random_selection_polynomials(prob, seed + 1)
        inst = assemble_lift(prob, k, z, z, result.objective, P, Ptilde, slack)
        rows += _solve_rows(obj, [inst])
        rows[-1]['kind'] = "lift"
        obj['console'].print(f"[dim]pinned {inst.metadata['pinned_mu']} occupation and "
                             f"{inst.metadata['pinned_muT']} terminal moments[/dim]")
    _finish_rows(obj, rows, f"{prob.name}_d{d}_lift.csv")


@main.command()
@order_option
@click.option('--variant', type=click.Choice([v.value for v in Variant]), default='A1',
              help='A1 uses the bound solution, A2 adds a selection program')
@click.option('--mode', '-m', type=click.Choice([m.value for m in Mode]), default='P1',
              help='P1 recovers invariant curves, P2 lifts and recovers coordinates')
@click.option('--kind', type=click.Choice(['dense', 'symmetric', 'subonly']), default='symmetric',
              help='Relaxation kind of the bound stage')
@click.option('--tgrid', type=int, help='Time grid size')
@click.option('--ygrid', type=int, help='Value grid size')
@click.option('--slack', type=float, help='Slack on the cost cap')
@click.option('--branch-tol', type=float, help='Relative zero threshold of square-root branches')
@click.pass_context
@handle_errors
def recover(ctx, d: int, variant: str, mode: str, kind: str, tgrid: Optional[int],
            ygrid: Optional[int], slack: Optional[float], branch_tol: Optional[float]):
    """Recover trajectories and write one CSV per curve."""

    obj = ctx.obj
    prob = _load(obj)
    k = _order(d, prob)
    cfg = RecoveryConfig.from_manager(obj['config'], tgrid=tgrid, ygrid=ygrid,
                                      seed=obj['seed'], slack=slack, branch_tol=branch_tol)
    report = run_algorithm(Variant(variant), prob, k, Mode(mode), cfg, obj['solver_config'],
                           kind=Kind(kind))
    print_recovery(obj['console'], report)
    out_dir = obj['out'] or Path(f"{prob.name}_d{d}_{variant}_{mode}")
    written = write_recovery(out_dir, report)
    obj['console'].print(f"[green]Wrote {len(written)} files to {out_dir}[/green]")


@main.command()
@order_option
@click.option('--candidate', '-c', default='true', help='Named candidate curve of the problem')
@click.option('--eps', type=float, help='Moment matching tolerance')
@click.pass_context
@handle_errors
def feastest(ctx, d: int, candidate: str, eps: Optional[float]):
    """Test whether a candidate state curve is admissible."""

    obj = ctx.obj
    prob = _load(obj)
    k = _order(d, prob)
    eps = eps if eps is not None else obj['config'].get_eps()
    z_table, y_table = candidate_tables(prob, candidate, 2 * k)
    verdict = feasibility_test(prob, k, z_table, y_table, eps,
                               solver_config=obj['solver_config'])
    print_verdict(obj['console'], verdict, candidate)
    if obj['out'] is not None:
        obj['out'].mkdir(parents=True, exist_ok=True)
        write_yaml(obj['out'] / f"{prob.name}_d{d}_{candidate}_verdict.yaml", verdict.to_dict())
    if verdict.outcome is not Outcome.ACCEPT:
        sys.exit(1)


@main.command()
@click.pass_context
@handle_errors
def validate(ctx):
    """Check that the declared group is a symmetry of the problem."""

    obj = ctx.obj
    prob = _load(obj)
    report = validate_symmetry(prob)
    print_validation(obj['console'], prob.name, report)
    if not report.passed:
        sys.exit(1)


@main.command()
@order_option
@kind_option
@click.argument('output', type=click.Path(dir_okay=False), required=False)
@click.pass_context
@handle_errors
def dump(ctx, d: int, kind: str, output: Optional[str]):
    """Write the assembled bound program as plain text (stdout by default)."""

    obj = ctx.obj
    prob = _load(obj)
    inst = assemble(Kind(kind), prob, _order(d, prob))
    text = inst.dump()
    if output is None:
        click.echo(text, nl=False)
        return
    Path(output).write_text(text)
    obj['console'].print(f"[green]Wrote {inst.num_variables} variables, "
                         f"{len(inst.psd_blocks)} blocks to {output}[/green]")


@main.group('config')
def config_group():
    """Show or change persisted defaults."""


@config_group.command('show')
@click.pass_context
def config_show(ctx):
    """Print the current configuration."""

    config = ctx.obj['config']
    table = Table(title=f"Configuration ({config.config_file})", show_header=True,
                  header_style="bold magenta")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="green")
    for key, value in sorted(config.as_dict().items()):
        table.add_row(key, str(value))
    ctx.obj['console'].print(table)


@config_group.command('set')
@click.argument('key')
@click.argument('value')
@click.pass_context
def config_set(ctx, key: str, value: str):
    """Persist a default; the value is parsed as YAML."""

    import yaml

    config = ctx.obj['config']
    console = ctx.obj['console']
    if key not in config.as_dict():
        console.print(f"[red]Unknown configuration key: {key}[/red]")
        sys.exit(1)
    parsed = yaml.safe_load(value)
    if key == 'backend' and parsed not in BACKENDS:
        console.print(f"[red]Unknown backend {parsed!r}; choose from {', '.join(BACKENDS)}[/red]")
        sys.exit(1)
    config.set(key, parsed)
    console.print(Panel(f"{key} = {parsed!r}", title="Configuration saved", border_style="green"))


@main.command()
@click.option('--mode', 'run_mode', type=click.Choice(MODES), required=True, help='Pipeline to run')
@order_option
@click.option('--kind', type=click.Choice(KINDS), default='symmetric', help='Relaxation kind')
@click.option('--variant', type=click.Choice([v.value for v in Variant]), default='A1',
              help='Recovery algorithm (recover)')
@click.option('--pmode', type=click.Choice([m.value for m in Mode]), default='P1',
              help='Recovery problem, P1 or P2 (recover)')
@click.option('--candidate', '-c', default='true', help='Named candidate curve (feastest)')
@click.option('--eps', type=float, help='Moment matching tolerance (feastest)')
@click.option('--slack', type=float, help='Slack on the cost cap')
@click.option('--tgrid', type=int, help='Time grid size (recover)')
@click.option('--ygrid', type=int, help='Value grid size (recover)')
@click.option('--branch-tol', type=float, help='Relative zero threshold of square-root branches')
@click.pass_context
def run(ctx, run_mode: str, d: int, kind: str, variant: str, pmode: str, candidate: str,
        eps: Optional[float], slack: Optional[float], tgrid: Optional[int],
        ygrid: Optional[int], branch_tol: Optional[float]):
    """Run one pipeline selected by --mode."""

    if run_mode in ('solve', 'compare'):
        ctx.invoke(solve_cmd, d=d, kind=kind, compare=run_mode == 'compare')
    elif run_mode == 'select':
        ctx.invoke(select, d=d, kind=kind, slack=slack)
    elif run_mode == 'lift':
        ctx.invoke(lift, d=d, slack=slack)
    elif run_mode == 'recover':
        ctx.invoke(recover, d=d, variant=variant, mode=pmode, kind=kind, tgrid=tgrid,
                   ygrid=ygrid, slack=slack, branch_tol=branch_tol)
    else:
        ctx.invoke(feastest, d=d, candidate=candidate, eps=eps)


if __name__ == '__main__':
    main()
