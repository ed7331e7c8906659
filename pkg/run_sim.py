#!/usr/bin/env python3
# run_sim.py - mmWave 에너지 효율 시뮬레이터 명령행 도구
#
#   python run_sim.py run --config config/default_config.json --seed 3 --drops 5
#   python run_sim.py sweep --axis n_urllc --values 5,10,15,20
#   python run_sim.py baseline --kind 2
#   python run_sim.py oracle --users 3 --beams 2 --tiles 4 --levels 5 --seed 0

import argparse
import json
import os
import sys
import time

from csv_plot import ResultPlotter, emit_outputs, write_csv
from oracle import EnumerationTooLargeError, enumerate_optimum, make_tiny_instance
from sim_config import load_config, log_system_info, parse_set_args, save_config, setup_logging
from sim_runner import run_battery, sweep


def build_parser():
    parser = argparse.ArgumentParser(description="mmWave eMBB/URLLC 에너지 효율 자원 할당 시뮬레이터")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON 설정 파일 (기본: config/default_config.json)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="설정 덮어쓰기, 예: --set opt.t_max=5")
        p.add_argument("--seed", type=int, action="append", default=None, help="시드 (여러 번 지정 가능)")
        p.add_argument("--drops", type=int, default=None)
        p.add_argument("--out", default=None, help="결과 디렉터리")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--no-plots", action="store_true")
        p.add_argument("--verbose", action="store_true")

    p_run = sub.add_parser("run", help="Monte-Carlo 드롭 실행")
    common(p_run)
    p_run.add_argument("--baseline", type=int, choices=(1, 2), default=None)

    p_sweep = sub.add_parser("sweep", help="한 축을 바꿔가며 같은 시드로 반복")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True, help="쉼표로 구분한 값 목록")

    p_base = sub.add_parser("baseline", help="비교 기법 실행")
    common(p_base)
    p_base.add_argument("--kind", type=int, choices=(1, 2), required=True)

    p_oracle = sub.add_parser("oracle", help="작은 인스턴스 전수 탐색")
    p_oracle.add_argument("--users", type=int, default=3)
    p_oracle.add_argument("--beams", type=int, default=2)
    p_oracle.add_argument("--tiles", type=int, default=4)
    p_oracle.add_argument("--levels", type=int, default=5)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--workers", type=int, default=1)
    p_oracle.add_argument("--verbose", action="store_true")
    return parser


def _load(args, extra=()):
    overrides = parse_set_args(args.set) + list(extra)
    if args.workers is not None:
        overrides.append(("run.workers", args.workers))
    if args.out is not None:
        overrides.append(("run.out_dir", args.out))
    if args.no_plots:
        overrides.append(("run.plots", False))
    if args.verbose:
        overrides.append(("run.verbose", True))
    return load_config(args.config, overrides)


def _run(args, method=None):
    extra = [("run.method", method)] if method else []
    config = _load(args, extra)
    logger, log_file = setup_logging(config.run.log_dir, config.run.verbose)
    logger.info(f"📝 로그 파일: {log_file}")
    log_system_info(logger, config.run.workers)
    seeds = args.seed or config.seeds
    records = run_battery(config, seeds=seeds, drops=args.drops)
    out_dir = config.run.out_dir
    emit_outputs(records, out_dir, plots=config.run.plots)
    save_config(config, os.path.join(out_dir, "config_used.json"))
    logger.info(f"✅ 완료: {out_dir}")
    return 0


def _sweep(args):
    config = _load(args)
    logger, log_file = setup_logging(config.run.log_dir, config.run.verbose)
    log_system_info(logger, config.run.workers)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    result = sweep(config, args.axis, values, seeds=args.seed, drops=args.drops)
    out_dir = config.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    write_csv(result.table, os.path.join(out_dir, "sweep.csv"))
    for value, records in result.records.items():
        emit_outputs(records, os.path.join(out_dir, f"{result.axis}={value}"), plots=config.run.plots)
    if config.run.plots and len(result.table):
        for column in ("ee_bits_per_j", "sum_rate_bits", "beams_utilized", "within_1ms"):
            ResultPlotter.plot_sweep(result.table, result.axis, column,
                                     os.path.join(out_dir, f"sweep_{column}.png"))
    save_config(config, os.path.join(out_dir, "config_used.json"))
    logger.info(f"✅ sweep 완료: {len(result.table)}행 → {out_dir}")
    return 0


def _oracle(args):
    logger, _ = setup_logging("logs", args.verbose)
    started = time.perf_counter()
    instance = make_tiny_instance(n_users=args.users, n_beams=args.beams, n_tiles=args.tiles,
                                  n_levels=args.levels, seed=args.seed)
    try:
        result = enumerate_optimum(instance, workers=args.workers)
    except EnumerationTooLargeError as e:
        logger.error(f"❌ {e}")
        return 2
    out = {
        "ee_bits_per_j": result.ee if result.feasible else None,
        "rate_bits": result.rate_bits,
        "power_w": result.power_w,
        "n_points": result.n_points,
        "n_feasible": result.n_feasible,
        "beam_of": result.alloc.beam_of.tolist() if result.feasible else None,
        "elapsed_s": time.perf_counter() - started,
    }
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args, method=f"baseline{args.baseline}" if args.baseline else None)
    if args.command == "baseline":
        return _run(args, method=f"baseline{args.kind}")
    if args.command == "sweep":
        return _sweep(args)
    return _oracle(args)


if __name__ == "__main__":
    sys.exit(main())
