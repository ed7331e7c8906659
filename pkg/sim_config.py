#!/usr/bin/env python3
# sim_config.py - 시뮬레이션 설정 (JSON + .env + --set 오버라이드) 및 로깅 설정

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from datetime import datetime

import psutil
from dotenv import load_dotenv

from grid import DEFAULT_SLICE_SPLIT

VALID_T_SSB_MS = (5, 10, 20, 40, 80, 160)
VALID_METHODS = ("proposed", "baseline1", "baseline2")
DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "default_config.json")


@dataclass
class GridSettings:
    layout: str = "mixed"
    bandwidth_khz: float = 50000.0
    guard_band_khz: float = 1910.0
    symbols_per_rb: int = 7
    slice_split: float = DEFAULT_SLICE_SPLIT
    re_overhead: float = 1.0


@dataclass
class RadioSettings:
    n_tx: int = 8
    beta: float = 0.003
    hpbw_rad: float = None
    noise_figure_db: float = 7.0
    fading: str = "sv"
    major_gain_db: float = None


@dataclass
class TrafficSettings:
    lambda_per_ms: float = 4.0
    packet_bytes: int = 32


@dataclass
class QosSettings:
    embb_rate_bits: float = 2000.0   # sub-frame 당 (2 Mb/s)
    zeta_bits: float = 0.0
    urllc_delay_ms: float = 1.0
    urllc_eps: float = 1e-5
    blep_embb: float = 1e-3
    blep_urllc: float = 1e-5


@dataclass
class PowerSettings:
    zeta: float = 0.25
    p_c_w: float = 0.005
    p_s_w: float = 0.05
    p_max_dbm: float = 50.0


@dataclass
class OptSettings:
    sigma: float = 1e-4
    t_max: int = 10
    lambda1_schedule: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    inner_tol: float = 1e-6
    sca_tol: float = 1e-4
    max_sca_iters: int = 20
    self_interference_form: bool = False
    init_margin: float = 1.25
    binary_tol: float = 1e-3
    barrier_mu: float = 10.0


@dataclass
class RunSettings:
    method: str = "proposed"
    t_f_ms: float = 1.0
    workers: int = 1
    verbose: bool = False
    out_dir: str = "results"
    log_dir: str = "logs"
    plots: bool = True


@dataclass
class ScenarioConfig:
    cell_radius_m: float = 150.0
    carrier_ghz: float = 28.0
    n_embb: int = 5
    n_urllc: int = 5
    n_beams: int = 8
    frame_ms: float = 10.0
    subframe_ms: float = 1.0
    t_ssb_ms: int = 10
    seeds: list = field(default_factory=lambda: [0])
    drops: int = 1
    min_distance_m: float = 1.0
    grid: GridSettings = field(default_factory=GridSettings)
    radio: RadioSettings = field(default_factory=RadioSettings)
    traffic: TrafficSettings = field(default_factory=TrafficSettings)
    qos: QosSettings = field(default_factory=QosSettings)
    power: PowerSettings = field(default_factory=PowerSettings)
    opt: OptSettings = field(default_factory=OptSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def validate(self):
        ratio = self.frame_ms / self.subframe_ms
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError(f"frame_ms ({self.frame_ms}) 는 subframe_ms ({self.subframe_ms}) 의 배수여야 함")
        if self.t_ssb_ms not in VALID_T_SSB_MS:
            raise ValueError(f"t_ssb_ms 는 {VALID_T_SSB_MS} 중 하나: {self.t_ssb_ms}")
        rounds = self.subframe_ms / self.run.t_f_ms
        if abs(rounds - round(rounds)) > 1e-9 or rounds < 1:
            raise ValueError(f"T_f ({self.run.t_f_ms} ms) 는 sub-frame 을 정수 개로 나눠야 함")
        if self.run.method not in VALID_METHODS:
            raise ValueError(f"run.method 는 {VALID_METHODS} 중 하나: {self.run.method!r}")
        if self.n_beams < 1 or self.n_embb < 0 or self.n_urllc < 0:
            raise ValueError("빔 수는 1 이상, 사용자 수는 0 이상")
        if self.n_embb + self.n_urllc < 1:
            raise ValueError("사용자가 최소 1 명 필요")
        if not self.opt.lambda1_schedule:
            raise ValueError("opt.lambda1_schedule 가 비어 있음")
        return self

    def to_dict(self):
        return asdict(self)


_SECTIONS = {
    "grid": GridSettings, "radio": RadioSettings, "traffic": TrafficSettings, "qos": QosSettings,
    "power": PowerSettings, "opt": OptSettings, "run": RunSettings,
}


def _build(cls, data, where):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"[{where}] 알 수 없는 설정 키: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data):
    """{"scenario": {...}, "grid": {...}, ...} → ScenarioConfig"""
    data = copy.deepcopy(data)
    unknown = set(data) - set(_SECTIONS) - {"scenario"}
    if unknown:
        raise ValueError(f"알 수 없는 설정 섹션: {sorted(unknown)}")
    top = data.get("scenario", {})
    for name in _SECTIONS:
        if name in top:
            raise ValueError(f"'{name}' 은 scenario 가 아니라 최상위 섹션이어야 함")
    sections = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return _build(ScenarioConfig, {**top, **sections}, "scenario").validate()


def _parse_value(text):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return text


def with_override(config, key, value):
    """'opt.t_max' 같은 점 표기 키로 값을 바꾼 새 설정"""
    new = copy.deepcopy(config)
    parts = key.split(".")
    target = new
    for part in parts[:-1]:
        if not hasattr(target, part) or not is_dataclass(getattr(target, part)):
            raise ValueError(f"알 수 없는 설정 섹션: {key}")
        target = getattr(target, part)
    if not hasattr(target, parts[-1]):
        raise ValueError(f"알 수 없는 설정 키: {key}")
    if isinstance(value, str):
        value = _parse_value(value)
    setattr(target, parts[-1], value)
    return new.validate()


def parse_set_args(items):
    """['opt.t_max=5', ...] → [(key, value), ...]"""
    pairs = []
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--set 형식은 key=value: {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def apply_env(config):
    """.env / 환경변수 (출력 경로, 워커 수, 로그 경로, verbose) - 물리 파라미터는 건드리지 않음"""
    load_dotenv()
    new = copy.deepcopy(config)
    if os.getenv("MMW_OUT_DIR"):
        new.run.out_dir = os.getenv("MMW_OUT_DIR")
    if os.getenv("MMW_WORKERS"):
        new.run.workers = int(os.getenv("MMW_WORKERS"))
    if os.getenv("MMW_LOG_DIR"):
        new.run.log_dir = os.getenv("MMW_LOG_DIR")
    if os.getenv("MMW_VERBOSE"):
        new.run.verbose = os.getenv("MMW_VERBOSE").strip().lower() in ("1", "true", "yes", "on")
    return new


def load_config(path=None, overrides=(), use_env=True):
    """JSON 설정 로드 → 환경변수 → --set 순서로 적용"""
    path = path or DEFAULT_CONFIG_PATH
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            config = config_from_dict(json.load(f))
    elif path == DEFAULT_CONFIG_PATH:
        config = ScenarioConfig().validate()
    else:
        raise FileNotFoundError(f"설정 파일 없음: {path}")
    if use_env:
        config = apply_env(config)
    for key, value in overrides:
        config = with_override(config, key, value)
    return config


def save_config(config, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data = config.to_dict()
    top = {k: v for k, v in data.items() if k not in _SECTIONS}
    out = {"scenario": top, **{name: data[name] for name in _SECTIONS}}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, ensure_ascii=False)


def setup_logging(log_dir="logs", verbose=False, name="mmwave_ee"):
    """파일 및 콘솔 로깅 설정"""
    os.makedirs(log_dir, exist_ok=True)
    log_filename = os.path.join(log_dir, f"mmwave_ee_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")

    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    file_handler = logging.FileHandler(log_filename, encoding="utf-8")
    file_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter("%(asctime)s - %(message)s"))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger, log_filename


def log_system_info(logger, workers):
    """실행 시작 시 메모리 / 워커 수 기록"""
    mem = psutil.virtual_memory()
    logger.info(f"💻 메모리: 전체 {mem.total / 1024 ** 3:.1f}GB, 사용 가능 {mem.available / 1024 ** 3:.1f}GB")
    logger.info(f"🔧 워커 수: {workers}")
