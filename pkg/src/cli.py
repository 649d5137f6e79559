"""
CLI 命令行界面
使用 Click + Rich：运行场景、演示本地 DKG + 门限签名、输出成本表
"""

import asyncio
import json
import logging
import random
from pathlib import Path
from typing import Optional

import click
import yaml
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .batch import BatchPool, parse_seed_range, summarize
from .config import load_config, validate_config
from .costmodel import (
    CostModelError,
    CostParams,
    Mechanism,
    breakeven,
    calibrate,
    cost_table,
    cost_table_csv,
    relay,
    relay_breakeven_requests,
)
from .dkg import DkgConfig, DkgError, load_transcript_records, run_local_dkg
from .group import PointG2
from .report import (
    metrics_json,
    render_batch,
    render_breakevens,
    render_cost_table,
    render_dkg_records,
    render_metrics,
)
from .scenario import ScenarioError, load_scenario, resolve_scenario_path
from .simulator import run_scenario
from .tbls import recover, share_indices, sign_share, verify
from .transcript import write_jsonl

# 数据走 stdout，日志与错误走 stderr
console = Console()
err_console = Console(stderr=True)

EXIT_INTERNAL = 1
EXIT_USAGE = 2

MAX_DEMO_NODES = 64


def setup_logging(verbose: bool = False, level: str = "INFO"):
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def fail(message: str, code: int = EXIT_USAGE):
    err_console.print(f"[red]❌ {message}[/red]")
    raise SystemExit(code)


def _cost_params(cfg: dict, calibration: Optional[str] = None) -> CostParams:
    """配置里的 cost 段 < ORACLE_COST_FILE / --calibration 文件"""
    path = calibration or cfg.get("paths", {}).get("cost_file")
    try:
        if path:
            return CostParams.from_file(path)
        return CostParams.from_dict(cfg.get("cost"))
    except FileNotFoundError as e:
        fail(str(e))
    except (CostModelError, TypeError) as e:
        fail(f"校准参数非法: {e}")


def _load(cfg: dict, name: str, seed):
    path = resolve_scenario_path(name, cfg["paths"]["scenario_dir"])
    try:
        return load_scenario(path, cfg, seed=seed)
    except FileNotFoundError as e:
        fail(str(e))
    except ScenarioError as e:
        fail(f"场景错误 {e}")


# ═══════════════════════════════════════════════════════
# CLI 主入口
# ═══════════════════════════════════════════════════════


@click.group()
@click.option("--config", "-c", default=None, help="配置文件路径")
@click.option("--verbose", "-v", is_flag=True, help="详细日志")
@click.pass_context
def cli(ctx, config, verbose):
    """🔗 Vote Oracle — 基于投票的跨链互操作预言机模拟器"""
    ctx.ensure_object(dict)
    try:
        cfg = load_config(config)
    except FileNotFoundError as e:
        setup_logging(verbose)
        err_console.print(f"[red]❌ {e}[/red]")
        err_console.print("[yellow]💡 可以复制 config.example.yaml 为 config.yaml 后修改[/yellow]")
        raise SystemExit(EXIT_USAGE)

    setup_logging(verbose, cfg["logging"]["level"])
    errors = validate_config(cfg)
    if errors:
        for e in errors:
            err_console.print(f"[red]❌ {e}[/red]")
        raise SystemExit(EXIT_USAGE)
    ctx.obj["config"] = cfg


# ═══════════════════════════════════════════════════════
# sim — 场景模拟
# ═══════════════════════════════════════════════════════


@cli.group()
def sim():
    """运行模拟场景"""


@sim.command("run")
@click.argument("scenario")
@click.option("--seed", "-s", type=int, default=None, help="覆盖场景里的种子")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None, help="JSON 报告输出路径")
@click.option("--format", "-f", "fmt", type=click.Choice(["json", "table"]), default="json", help="输出格式")
@click.option("--transcript", "-t", type=click.Path(dir_okay=False), default=None, help="写出 JSON lines 运行记录")
@click.option("--calibration", type=click.Path(dir_okay=False), default=None, help="成本模型校准文件")
@click.pass_context
def sim_run(ctx, scenario, seed, out, fmt, transcript, calibration):
    """运行一个场景并输出指标（json 格式为固定字段集）"""
    cfg = ctx.obj["config"]
    params = _cost_params(cfg, calibration)
    sc = _load(cfg, scenario, seed)
    try:
        result = run_scenario(sc, cost_params=params)
    except Exception as e:
        logging.getLogger("vote-oracle.cli").exception("模拟失败")
        fail(f"模拟失败: {e}", EXIT_INTERNAL)

    report = metrics_json(result.metrics)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(report, encoding="utf-8")
        err_console.print(f"[green]✅ 报告已写入 {out}[/green]")
    if fmt == "table":
        render_metrics(result.metrics, console)
    elif not out:
        click.echo(report, nl=False)
    if transcript:
        write_jsonl(transcript, result.records)
        err_console.print(f"[green]✅ 运行记录已写入 {transcript}[/green]")


@sim.command("batch")
@click.argument("scenario")
@click.option("--seeds", default="1-10", show_default=True, help="种子区间，如 1-20 或 1,5,9")
@click.option("--workers", "-w", type=int, default=None, help="进程数（默认 CPU 数）")
@click.option("--format", "-f", "fmt", type=click.Choice(["json", "table"]), default="table", help="输出格式")
@click.option("--calibration", type=click.Path(dir_okay=False), default=None, help="成本模型校准文件")
@click.pass_context
def sim_batch(ctx, scenario, seeds, workers, fmt, calibration):
    """同一场景多个种子并发运行"""
    cfg = ctx.obj["config"]
    params = _cost_params(cfg, calibration)
    try:
        seed_list = parse_seed_range(seeds)
    except ValueError as e:
        fail(str(e))
    sc = _load(cfg, scenario, None)

    pool = BatchPool(sc.path, cfg, params, max_workers=workers)
    try:
        rows = asyncio.run(pool.run(seed_list))
    except Exception as e:
        logging.getLogger("vote-oracle.cli").exception("批量运行失败")
        fail(f"批量运行失败: {e}", EXIT_INTERNAL)

    if fmt == "json":
        payload = {"scenario": sc.name, "summary": summarize(rows),
                   "runs": [{k: v for k, v in r.items() if k != "metrics"} for r in rows]}
        click.echo(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
        return
    render_batch(rows, console)
    s = summarize(rows)
    console.print(
        f"\n[bold]共 {s['runs']} 次运行：完成 {s['fulfilled']}，未完成 {s['unfulfilled']}，"
        f"错误结果 {s['wrong_results']}，最大延迟 {s['max_latency']}[/bold]"
    )


# ═══════════════════════════════════════════════════════
# dkg — 本地 DKG 演示
# ═══════════════════════════════════════════════════════


@cli.group()
def dkg():
    """分布式密钥生成演示与记录查看"""


@dkg.command("demo")
@click.option("--nodes", "-n", type=int, default=5, show_default=True, help="参与者数量")
@click.option("--threshold", "-t", type=int, default=3, show_default=True, help="签名门限")
@click.option("--seed", "-s", type=int, default=0, show_default=True, help="随机种子")
@click.option("--message", "-m", default="hello oracle", show_default=True, help="演示签名的消息")
@click.option("--transcript", type=click.Path(dir_okay=False), default=None, help="写出 DKG 广播记录")
def dkg_demo(nodes, threshold, seed, message, transcript):
    """本地跑一次 DKG，并用 t 个分片签名后对 PK 验证"""
    if not 1 <= threshold <= nodes <= MAX_DEMO_NODES:
        fail(f"需要 1 ≤ t ≤ n ≤ {MAX_DEMO_NODES}，实际 t={threshold}, n={nodes}")

    participants = tuple(f"node{i}" for i in range(nodes))
    try:
        key_shares, record = run_local_dkg(DkgConfig(participants, threshold, 1), random.Random(seed))
    except DkgError as e:
        fail(f"DKG 失败: {e}", EXIT_INTERNAL)
    pk = next(iter(key_shares.values())).public_key

    console.print(Panel(
        f"[bold]n:[/bold] {nodes}    [bold]t:[/bold] {threshold}    [bold]种子:[/bold] {seed}\n"
        f"[bold]PK:[/bold] {pk.hex()}",
        title="🔑 DKG 完成",
        border_style="cyan",
    ))

    table = Table(title="分片", box=box.ROUNDED)
    table.add_column("节点", style="cyan")
    table.add_column("序号", justify="right")
    table.add_column("验证公钥", style="dim", max_width=40)
    for node, ks in key_shares.items():
        table.add_row(node, str(ks.index), ks.verification_keys[ks.index].hex()[:40] + "…")
    console.print(table)

    if transcript:
        record.dump(transcript)
        err_console.print(f"[green]✅ DKG 记录已写入 {transcript}[/green]")

    payload = message.encode("utf-8")
    signers = list(key_shares.values())[:threshold]
    shares = [sign_share(ks, payload) for ks in signers]
    signature = recover(shares, threshold)
    ok = verify(signature, payload, pk)
    console.print(f"签名分片序号: {list(share_indices(shares))}")

    if nodes == 1:
        sole = signers[0]
        same = PointG2.generator() * sole.secret == pk
        console.print(f"PK = 唯一分片·G: {'✅' if same else '❌'}")
        ok = ok and same

    if ok:
        console.print(f"[green]✅ 门限签名验证通过（{threshold}/{nodes}）[/green]")
    else:
        fail("门限签名验证失败", EXIT_INTERNAL)


@dkg.command("show")
@click.argument("path", type=click.Path(dir_okay=False))
def dkg_show(path):
    """查看 dkg demo --transcript 写出的记录"""
    try:
        records = load_transcript_records(path)
    except FileNotFoundError as e:
        fail(str(e))
    except json.JSONDecodeError as e:
        fail(f"记录文件格式错误: {e}")
    render_dkg_records(records, console)


# ═══════════════════════════════════════════════════════
# cost — gas 成本模型
# ═══════════════════════════════════════════════════════


@cli.group()
def cost():
    """gas 成本表与交叉点"""


@cost.command("table")
@click.option("--max-nodes", "-n", type=int, default=20, show_default=True, help="最大节点数")
@click.option("--format", "-f", "fmt", type=click.Choice(["csv", "table", "json"]), default="csv", help="输出格式")
@click.option("--calibration", type=click.Path(dir_okay=False), default=None, help="成本模型校准文件")
@click.pass_context
def cost_table_cmd(ctx, max_nodes, fmt, calibration):
    """输出 n = 1..N 的单次提交 gas"""
    params = _cost_params(ctx.obj["config"], calibration)
    try:
        rows = cost_table(max_nodes, params)
    except CostModelError as e:
        fail(str(e))
    if fmt == "csv":
        click.echo(cost_table_csv(rows), nl=False)
    elif fmt == "json":
        click.echo(json.dumps(rows, indent=2))
    else:
        render_cost_table(rows, console)


@cost.command("breakeven")
@click.option("--blocks", "-b", type=int, default=100, show_default=True, help="中继对比的区块窗口")
@click.option("--format", "-f", "fmt", type=click.Choice(["table", "json"]), default="table", help="输出格式")
@click.option("--calibration", type=click.Path(dir_okay=False), default=None, help="成本模型校准文件")
@click.pass_context
def cost_breakeven(ctx, blocks, fmt, calibration):
    """BLS 相对链上聚合与 ECDSA 的交叉点，以及中继的请求数交叉点"""
    params = _cost_params(ctx.obj["config"], calibration)
    try:
        crossovers = {
            Mechanism.ON_CHAIN.value: breakeven(Mechanism.BLS, Mechanism.ON_CHAIN, params),
            Mechanism.ECDSA.value: breakeven(Mechanism.BLS, Mechanism.ECDSA, params),
        }
        relay_gas = relay(blocks, params)
        relay_requests = relay_breakeven_requests(blocks, params)
    except CostModelError as e:
        fail(str(e))

    if fmt == "json":
        click.echo(json.dumps({
            "breakeven": crossovers,
            "relay": {"blocks": blocks, "gas": relay_gas, "requests": relay_requests},
        }, indent=2, sort_keys=True))
        return
    render_breakevens(crossovers, console)
    console.print(
        f"中继 {blocks} 块: {relay_gas:,} gas，约等于 {relay_requests} 次 BLS 结果提交"
    )


@cost.command("calibrate")
@click.option("--onchain", type=int, default=4, show_default=True, help="BLS 首次比链上聚合便宜的 n")
@click.option("--ecdsa", type=int, default=16, show_default=True, help="BLS 首次比 ECDSA 便宜的 n")
@click.option("--anchor", "anchors", multiple=True, help="锚点 方案:n:gas，可重复，如 ecdsa:0:100000")
@click.option("--calibration", type=click.Path(dir_okay=False), default=None, help="基准校准文件")
@click.pass_context
def cost_calibrate(ctx, onchain, ecdsa, anchors, calibration):
    """求解满足给定交叉点的线性模型常数，输出可作为校准文件的 YAML"""
    params = _cost_params(ctx.obj["config"], calibration)
    parsed = {}
    try:
        for item in anchors:
            mech, n, gas = item.split(":")
            parsed.setdefault(Mechanism.parse(mech).value, []).append((int(n), int(gas)))
        result = calibrate(onchain, ecdsa, parsed, params)
    except ValueError as e:
        fail(f"校准失败: {e}")

    click.echo(yaml.safe_dump({"cost": {
        "onchain_base": result.onchain_base,
        "onchain_per_node": result.onchain_per_node,
        "ecdsa_base": result.ecdsa_base,
        "ecdsa_per_signature": result.ecdsa_per_signature,
    }}, sort_keys=False), nl=False)


if __name__ == "__main__":
    cli()
