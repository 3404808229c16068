#!/usr/bin/env python3
"""
AFL 求解器命令列

    python main.py solve FILE.afl [--model] [--dump-smt PATH] [--dump-scm PATH] [--stats]
    python main.py validate FILE.afl MODEL.afl-model
    python main.py bench DIR [--jobs N] [--csv PATH] [--generate DIR]

結束碼: 0 sat / 1 unsat / 2 unknown / 3 錯誤
stdout 只輸出狀態與模型，其餘訊息 (emoji 開頭) 都寫到 stderr。
"""

from __future__ import annotations

import argparse
import csv
import logging
import queue
import random
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Optional

import numpy as np

from afl_ast import AflError, WellFormednessViolation, formula_size
from afl_generators import family_instances, random_formula
from afl_parser import parse_file, render_error
from lia import to_smtlib
from lia_backend import CHOICES, SAT, UNKNOWN, UNSAT, SolverConfig
from modelgen import parse_model, print_model, validate_model
from pipeline import SolveResult, dump_machines, solve_formula
from sexpr import ParseError

logger = logging.getLogger(__name__)

EXIT_CODES = {SAT: 0, UNSAT: 1, UNKNOWN: 2}
EXIT_ERROR = 3


def say(message: str):
    print(message, file=sys.stderr)


def solver_config(args) -> SolverConfig:
    overrides = {}
    if getattr(args, "backend", None):
        overrides["choice"] = args.backend
    if getattr(args, "timeout", None) is not None:
        overrides["timeout"] = args.timeout
    return SolverConfig.from_env(**overrides)


def report_error(error: Exception, path: Optional[str] = None):
    if isinstance(error, ParseError):
        for line in render_error(error, path).splitlines():
            say(f"❌ {line}")
    elif isinstance(error, WellFormednessViolation):
        for problem in error.problems:
            where = f":{problem.span}" if getattr(problem, "span", None) else ""
            say(f"❌ {path or '<input>'}{where}: {problem.describe()}")
    else:
        say(f"❌ {path + ': ' if path else ''}{error}")


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    try:
        formula = parse_file(args.file)
        say(f"🔍 求解 {args.file} ...")
        result = solve_formula(formula, solver_config(args), validate=args.validate)
    except (AflError, OSError) as e:
        report_error(e, args.file)
        return EXIT_ERROR

    if args.dump_smt and result.lia is not None:
        Path(args.dump_smt).write_text(to_smtlib(result.lia), encoding="utf-8")
        say(f"📝 ψ 已寫入 {args.dump_smt}")
    if args.dump_scm and result.encoding is not None:
        Path(args.dump_scm).write_text(dump_machines(result.encoding), encoding="utf-8")
        say(f"📝 機器已寫入 {args.dump_scm}")

    print(result.status)
    if result.status == SAT and args.model:
        print(print_model(result.model, formula), end="")
    if result.status == UNKNOWN:
        say(f"⚠️ unknown: {result.reason}")
    if result.status == UNSAT and result.caveat:
        say("⚠️ unsat 只在 fallback 後端的搜尋範圍內成立")
    if args.stats:
        for key, value in result.stats.items():
            say(f"📊 {key}: {value}")
        say(f"📊 轉換 {result.timings.get('translate', 0):.2f}s, 求解 {result.timings.get('solve', 0):.2f}s "
            f"({result.backend})")
    return EXIT_CODES[result.status]


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        formula = parse_file(args.formula)
        sigma = parse_model(Path(args.model_file).read_text(encoding="utf-8"))
    except (AflError, OSError) as e:
        report_error(e, getattr(e, "filename", None) or args.formula)
        return EXIT_ERROR
    if validate_model(formula, sigma):
        say("✅ 模型滿足公式")
        return 0
    say("❌ 模型不滿足公式")
    return 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@dataclass
class BenchRow:
    name: str
    expected: Optional[str]
    status: str
    size: int = 0
    folds: int = 0
    mfpa: int = 0
    translate: float = 0.0
    solve: float = 0.0
    length: Optional[int] = None
    psi_size: int = 0
    error: str = ""

    @property
    def passed(self) -> Optional[bool]:
        if self.expected is None:
            return None
        return self.status == self.expected

    def cells(self) -> list:
        mark = {True: "✅", False: "❌", None: "-"}[self.passed]
        return [self.name, self.size, self.folds, self.mfpa, f"{self.translate:.2f}s",
                f"{self.solve:.2f}s", self.status, "-" if self.length is None else self.length,
                self.expected or "-", mark]


COLUMNS = ["example", "|phi|", "folds", "MFPA", "transl.", "solving", "result", "length",
           "expected", "pass"]


class BenchRunner:
    """把語料檔案放進佇列，由 jobs 個工作執行緒求解；輸出依檔名排序"""

    def __init__(self, files: list[Path], cfg: SolverConfig, jobs: int = 1, validate: bool = True):
        self.files = files
        self.cfg = cfg
        self.jobs = max(1, jobs)
        self.validate = validate
        self.work_queue: queue.Queue = queue.Queue()
        self.rows: list[BenchRow] = []
        self.lock = threading.Lock()

    def run_one(self, path: Path) -> BenchRow:
        expect_file = path.with_suffix(".expect")
        expected = expect_file.read_text(encoding="utf-8").strip() if expect_file.exists() else None
        try:
            formula = parse_file(path)
            result: SolveResult = solve_formula(formula, self.cfg, validate=self.validate)
        except (AflError, OSError) as e:
            logger.error(f"{path.name}: {e}")
            return BenchRow(path.stem, expected, "error", error=str(e))
        stats = result.stats
        return BenchRow(path.stem, expected, result.status, formula_size(formula), stats["folds"],
                        stats["mfpa"], result.timings.get("translate", 0.0),
                        result.timings.get("solve", 0.0), result.array_length, stats["psi_size"])

    def worker(self):
        while True:
            try:
                path = self.work_queue.get(timeout=1)
            except queue.Empty:
                return
            try:
                row = self.run_one(path)
                say(f"{'✅' if row.passed is not False else '❌'} {path.name}: {row.status}")
                with self.lock:
                    self.rows.append(row)
            finally:
                self.work_queue.task_done()

    def run(self) -> list[BenchRow]:
        for path in self.files:
            self.work_queue.put(path)
        threads = [threading.Thread(target=self.worker, daemon=True) for _ in range(self.jobs)]
        for t in threads:
            t.start()
        self.work_queue.join()
        return sorted(self.rows, key=lambda r: r.name)


def render_table(rows: list[BenchRow]) -> str:
    table = [COLUMNS] + [[str(c) for c in row.cells()] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def write_csv(rows: list[BenchRow], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS + ["psi_size", "error"])
        for row in rows:
            writer.writerow(row.cells() + [row.psi_size, row.error])


def family_of(name: str) -> str:
    stem, _, suffix = name.rpartition("_")
    return stem if suffix.isdigit() and stem else name


def growth_slopes(rows: list[BenchRow]) -> dict[str, float]:
    """每個參數化族在 log-log 空間中 |ψ| 對 |φ| 的最小平方斜率"""
    families: dict[str, list[BenchRow]] = {}
    for row in rows:
        if row.psi_size > 0 and row.size > 0:
            families.setdefault(family_of(row.name), []).append(row)
    slopes = {}
    for family, members in families.items():
        sizes = sorted({(r.size, r.psi_size) for r in members})
        if len({s for s, _ in sizes}) < 2:
            continue
        x = np.log(np.array([s for s, _ in sizes], dtype=float))
        y = np.log(np.array([p for _, p in sizes], dtype=float))
        slopes[family] = float(np.polyfit(x, y, 1)[0])
    return slopes


def log_bench(rows: list[BenchRow]):
    """附加到當天的 afl_bench_log_YYYYMMDD.txt；寫入失敗不會中止執行"""
    try:
        log_filename = f"afl_bench_log_{datetime.now().strftime('%Y%m%d')}.txt"
        timestamp = datetime.now().strftime("%H:%M:%S")
        with open(log_filename, "a", encoding="utf-8") as f:
            f.write(f"\n[{timestamp}] {len(rows)} 個檔案\n")
            for row in rows:
                f.write(f"{row.name}: {row.status} 轉換 {row.translate:.2f}s 求解 {row.solve:.2f}s\n")
            f.write("-" * 50 + "\n")
    except OSError as e:
        logger.error(f"日誌記錄錯誤: {e}")


def generate_corpus(directory: str, seed: int, random_count: int) -> int:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    instances = family_instances()
    for inst in instances:
        (out / f"{inst.name}.afl").write_text(inst.text, encoding="utf-8")
        (out / f"{inst.name}.expect").write_text(inst.expected + "\n", encoding="utf-8")
    rng = random.Random(seed)
    for k in range(random_count):
        (out / f"random_{k:03d}.afl").write_text(random_formula(rng), encoding="utf-8")
    say(f"✅ 已產生 {len(instances) + random_count} 個檔案到 {out}")
    return 0


def cmd_bench(args) -> int:
    if args.generate:
        return generate_corpus(args.generate, args.seed, args.random)
    files = sorted(Path(args.corpus).glob("*.afl"))
    say(f"🚀 基準測試: {len(files)} 個檔案, {args.jobs} 個工作執行緒")
    started = time.time()
    rows = BenchRunner(files, solver_config(args), args.jobs, args.validate).run()
    print(render_table(rows))
    for family, slope in sorted(growth_slopes(rows).items()):
        print(f"growth {family}: |psi| ~ |phi|^{slope:.2f}")
    if args.csv:
        write_csv(rows, args.csv)
    log_bench(rows)
    failed = [r.name for r in rows if r.passed is False]
    say(f"📊 {len(rows) - len(failed)}/{len(rows)} 符合預期, 共 {time.time() - started:.1f}s")
    if failed:
        say(f"❌ 不符合預期: {', '.join(failed)}")
    return 0 if not failed else 1


# ---------------------------------------------------------------------------
# 參數
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=CHOICES, help="LIA 後端 (預設 auto 或 AFL_BACKEND)")
    common.add_argument("--timeout", type=float, help="求解逾時秒數")
    common.add_argument("--validate", action=argparse.BooleanOptionalAction, default=True,
                        help="另外用正規化後的公式驗證模型 (原公式一律驗證)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="afl", description="Array Folds Logic 可滿足性求解器")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="求解一個 .afl 檔")
    solve.add_argument("file")
    solve.add_argument("--model", action="store_true", help="sat 時輸出模型")
    solve.add_argument("--dump-smt", metavar="PATH")
    solve.add_argument("--dump-scm", metavar="PATH")
    solve.add_argument("--stats", action="store_true")
    solve.set_defaults(handler=cmd_solve)

    validate = sub.add_parser("validate", parents=[common], help="檢查模型是否滿足公式")
    validate.add_argument("formula")
    validate.add_argument("model_file")
    validate.set_defaults(handler=cmd_validate)

    bench = sub.add_parser("bench", parents=[common], help="跑整個語料目錄")
    bench.add_argument("corpus", nargs="?", default="corpus")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--csv", metavar="PATH")
    bench.add_argument("--generate", metavar="DIR", help="寫出參數化基準族後結束")
    bench.add_argument("--random", type=int, default=0, help="--generate 時額外產生的隨機公式數")
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )
    random.seed(args.seed)
    try:
        return args.handler(args)
    except KeyboardInterrupt:
        say("\n👋 使用者中斷")
        return EXIT_ERROR
    except ValueError as e:
        say(f"❌ 設定錯誤: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
