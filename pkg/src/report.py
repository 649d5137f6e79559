"""
报告输出
模拟指标的 JSON（机器可读）与 Rich 表格（人可读），成本表与 DKG 记录的渲染
"""
from __future__ import annotations

import json
from typing import Any, Dict, List, Mapping, Sequence

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .simulator import Metrics


def metrics_json(metrics: Metrics) -> str:
    return json.dumps(metrics.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_metrics(metrics: Metrics, console: Console):
    console.print(Panel(
        f"[bold]场景:[/bold] {metrics.scenario}    [bold]种子:[/bold] {metrics.seed}    "
        f"[bold]区块:[/bold] {metrics.blocks}\n"
        f"[bold]DKG 会话:[/bold] {metrics.dkg_sessions}    "
        f"[bold]公钥激活:[/bold] {metrics.key_activated_at if metrics.key_activated_at is not None else '-'}    "
        f"[bold]激活后节点交易:[/bold] {metrics.oracle_txs_after_key}",
        title="📊 模拟结果",
        border_style="cyan",
    ))

    if metrics.requests:
        table = Table(title="📨 请求", box=box.ROUNDED)
        table.add_column("#", justify="right")
        table.add_column("交易", style="cyan")
        table.add_column("格式", style="dim")
        table.add_column("请求块", justify="right")
        table.add_column("结果块", justify="right")
        table.add_column("延迟", justify="right", style="green")
        table.add_column("聚合者", style="blue")
        table.add_column("正确")
        for r in metrics.requests:
            table.add_row(
                str(r.request_id),
                r.tx_id,
                r.format.value,
                str(r.requested_at),
                str(r.fulfilled_at) if r.fulfilled else "-",
                str(r.latency) if r.fulfilled else "-",
                r.aggregator or "-",
                {True: "✅", False: "❌", None: "⏳"}[r.correct],
            )
        console.print(table)
    else:
        console.print("[yellow]没有请求[/yellow]")

    nodes = Table(title="🖥 节点", box=box.ROUNDED)
    nodes.add_column("账户", style="cyan")
    nodes.add_column("余额", justify="right")
    nodes.add_column("奖励", justify="right", style="green")
    nodes.add_column("抽奖中奖", justify="right", style="magenta")
    for account, balance in sorted(metrics.balances.items()):
        nodes.add_row(
            account,
            f"{balance:,}",
            f"{metrics.rewards.get(account, 0):,}" if account in metrics.rewards else "-",
            str(metrics.lottery_wins.get(account, 0)) if account in metrics.lottery_wins else "-",
        )
    console.print(nodes)

    reasons = ", ".join(f"{k}×{v}" for k, v in sorted(metrics.rejection_reasons.items())) or "-"
    console.print(
        f"提交: [green]{metrics.submissions_accepted} 接受[/green] / "
        f"[red]{metrics.submissions_rejected} 拒绝[/red]（{reasons}）"
    )
    console.print(
        f"完成 {metrics.fulfilled}/{len(metrics.requests)}，错误结果 {metrics.wrong_results}，"
        f"守恒 {'✅' if metrics.conservation else '❌'}"
    )
    console.print(
        f"验证奖池: 余额 {metrics.pot:,}，已发放 {metrics.pot_paid:,}，累计流入 {metrics.pot_accrued:,}"
    )
    render_run_costs(metrics, console)
    console.print(f"[dim]记录摘要 {metrics.transcript_digest}[/dim]")


def render_run_costs(metrics: Metrics, console: Console):
    table = Table(title="⛽ 本次运行的 gas 估计", box=box.ROUNDED)
    table.add_column("方案", style="cyan")
    table.add_column("gas", justify="right")
    for mech, gas in metrics.costs.items():
        label = f"{mech}（{metrics.relay_window} 块）" if mech == "relay" else mech
        table.add_row(label, f"{gas:,}")
    console.print(table)
    console.print(
        f"[dim]同一窗口内结果数超过 {metrics.relay_breakeven_requests} 时中继更便宜[/dim]"
    )


def render_cost_table(rows: Sequence[Mapping[str, int]], console: Console):
    table = Table(title="⛽ 单次提交 gas", box=box.ROUNDED)
    table.add_column("n", justify="right")
    table.add_column("on-chain", justify="right", style="red")
    table.add_column("ecdsa", justify="right", style="yellow")
    table.add_column("bls", justify="right", style="green")
    for row in rows:
        table.add_row(str(row["n"]), f"{row['on-chain']:,}", f"{row['ecdsa']:,}", f"{row['bls']:,}")
    console.print(table)


def render_breakevens(breakevens: Mapping[str, Any], console: Console):
    table = Table(title="📉 BLS 交叉点", box=box.ROUNDED)
    table.add_column("对比方案", style="cyan")
    table.add_column("n", justify="right", style="green")
    for mech, n in breakevens.items():
        table.add_row(mech, str(n))
    console.print(table)


def render_dkg_records(records: List[Dict[str, Any]], console: Console):
    deals = [r for r in records if r.get("type") == "deal"]
    complaints = [r for r in records if r.get("type") == "complaint"]
    sessions = [r for r in records if r.get("type") == "session"]
    keys = {r["session"]: r["public_key"] for r in records if r.get("type") == "public_key"}

    for s in sessions:
        console.print(Panel(
            f"[bold]参与者:[/bold] {', '.join(s['participants'])}\n"
            f"[bold]门限:[/bold] {s['threshold']}\n"
            f"[bold]公钥:[/bold] {keys.get(s['session'], '-')[:32]}…",
            title=f"🔑 会话 #{s['session']}",
            border_style="cyan",
        ))

    table = Table(title="📤 分发", box=box.ROUNDED)
    table.add_column("会话", justify="right")
    table.add_column("分发者", style="cyan")
    table.add_column("承诺项数", justify="right")
    table.add_column("被投诉", justify="right", style="red")
    for d in deals:
        count = sum(1 for c in complaints if c["dealer"] == d["dealer"] and c["session"] == d["session"])
        table.add_row(str(d["session"]), d["dealer"], str(len(d["commitment"])), str(count))
    console.print(table)

    if complaints:
        ctable = Table(title="⚠️ 投诉", box=box.ROUNDED)
        ctable.add_column("会话", justify="right")
        ctable.add_column("投诉者", style="yellow")
        ctable.add_column("分发者", style="red")
        ctable.add_column("分片序号", justify="right")
        for c in complaints:
            ctable.add_row(str(c["session"]), c["complainer"], c["dealer"], str(c["share_index"]))
        console.print(ctable)


def render_batch(rows: Sequence[Mapping[str, Any]], console: Console):
    table = Table(title="🧪 批量运行", box=box.ROUNDED)
    table.add_column("种子", justify="right")
    table.add_column("完成", justify="right", style="green")
    table.add_column("未完成", justify="right", style="yellow")
    table.add_column("错误结果", justify="right", style="red")
    table.add_column("最大延迟", justify="right")
    table.add_column("摘要", style="dim")
    for row in rows:
        table.add_row(
            str(row["seed"]),
            str(row["fulfilled"]),
            str(row["unfulfilled"]),
            str(row["wrong_results"]),
            "-" if row["max_latency"] is None else str(row["max_latency"]),
            row["transcript_digest"][:16],
        )
    console.print(table)
