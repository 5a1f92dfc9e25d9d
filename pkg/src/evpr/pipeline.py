"""Config-driven orchestration of the full pipeline.

The pipeline is a chain of file-level stages: slice -> reconstruct ->
describe -> (align) -> similarity -> seqmatch -> (fuse) -> eval. Each
stage reads and writes the interchange formats of its module, so chaining
the CLI subcommands reproduces ``run_pipeline`` byte-exactly:
``run_pipeline`` is literally the composition of the same stage functions
over the same files.

Configs are plain INI text (sections: input, binning, reconstruction,
descriptor, sequence, ensemble, eval, output). Every output carries a
fingerprint: the SHA-256 (first 16 hex digits) of the canonicalized
``section.key=value`` lines, excluding the output section.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import descriptor as desc_mod
from . import ensemble as ens_mod
from . import evaluate as eval_mod
from . import events as ev_mod
from . import reconstruct as rec_mod
from . import seqmatch as seq_mod
from . import similarity as sim_mod
from .errors import ConfigError, DataError
from .synth import SynthParams, generate_traverse, perturb_traverse

WORKERS_ENV = "EVPR_WORKERS"


@dataclass
class BinningConfig:
    mode: str = "time"          # time | count
    delta_t: float = 0.5
    n: int = 5000
    t0: float | None = None

    def validate(self) -> None:
        if self.mode not in ("time", "count"):
            raise ConfigError(f"binning.mode must be time or count, got {self.mode!r}")
        if self.mode == "time" and self.delta_t <= 0:
            raise ConfigError("binning.delta_t must be > 0")
        if self.mode == "count" and self.n < 1:
            raise ConfigError("binning.n must be >= 1")


@dataclass
class SequenceConfig:
    matcher: str = "adaptive"   # adaptive | baseline | none
    length: int = 10
    normalize: bool = True
    epsilon: float = 1e-8

    def validate(self) -> None:
        if self.matcher not in ("adaptive", "baseline", "none"):
            raise ConfigError(f"unknown sequence.matcher {self.matcher!r}")
        if self.length < 1:
            raise ConfigError("sequence.length must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError("sequence.epsilon must be > 0")


@dataclass
class PipelineConfig:
    """Full pipeline configuration; see load_config for the file schema."""

    # input: either synthetic traverses or event/GPS files
    input_mode: str = "synth"   # synth | files
    synth: SynthParams = field(default_factory=SynthParams)
    query_seed: int | None = None
    query_events: str = ""
    query_gps: str = ""
    ref_events: str = ""
    ref_gps: str = ""
    sensor_width: int = 64
    sensor_height: int = 48
    hot_pixel_rate: float = 0.0  # 0 disables hot-pixel suppression

    binning: BinningConfig = field(default_factory=BinningConfig)
    recon: rec_mod.ReconParams = field(default_factory=rec_mod.ReconParams)

    descriptor_source: str = "builtin"  # builtin | external
    descriptor_grid: int = desc_mod.DEFAULT_GRID
    external_query_desc: str = ""
    external_ref_desc: str = ""
    external_query_frames: str = ""
    external_ref_frames: str = ""

    sequence: SequenceConfig = field(default_factory=SequenceConfig)

    ensemble_enabled: bool = False
    # grid members as (reconstruction method, delta_t) pairs
    ensemble_members: list[tuple[str, float]] = field(default_factory=list)
    ensemble_manifest: str = ""
    target_rate: float = 1.0

    tolerance_m: float = eval_mod.DEFAULT_TOLERANCE_M
    group: str = ""
    output_dir: str = "out"
    write_pgm: bool = False

    def validate(self) -> None:
        if self.input_mode not in ("synth", "files"):
            raise ConfigError(f"input.mode must be synth or files, got {self.input_mode!r}")
        if self.input_mode == "files":
            for name in ("query_events", "query_gps", "ref_events", "ref_gps"):
                path = getattr(self, name)
                if not path:
                    raise ConfigError(f"input.{name} required in files mode")
                if not Path(path).exists():
                    raise ConfigError(f"input.{name}: {path} does not exist")
        self.binning.validate()
        try:
            self.recon.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.descriptor_source not in ("builtin", "external"):
            raise ConfigError(f"unknown descriptor.source {self.descriptor_source!r}")
        self.sequence.validate()
        if self.ensemble_enabled and not self.ensemble_members and not self.ensemble_manifest:
            raise ConfigError("ensemble enabled but no members or manifest given")
        if self.target_rate <= 0:
            raise ConfigError("ensemble.target_rate must be > 0")
        if self.tolerance_m < 0:
            raise ConfigError("eval.tolerance_m must be >= 0")


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def load_config(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Parse an INI config file, then apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        parser.read(path)
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    cfg = PipelineConfig()
    get = parser.get

    def opt(section, key, default, kind=str):
        if parser.has_option(section, key):
            return _coerce(section, key, get(section, key), kind)
        return default

    cfg.input_mode = opt("input", "mode", cfg.input_mode)
    cfg.sensor_width = opt("input", "sensor_width", cfg.sensor_width, int)
    cfg.sensor_height = opt("input", "sensor_height", cfg.sensor_height, int)
    cfg.hot_pixel_rate = opt("input", "hot_pixel_rate", cfg.hot_pixel_rate, float)
    cfg.query_events = opt("input", "query_events", cfg.query_events)
    cfg.query_gps = opt("input", "query_gps", cfg.query_gps)
    cfg.ref_events = opt("input", "ref_events", cfg.ref_events)
    cfg.ref_gps = opt("input", "ref_gps", cfg.ref_gps)

    sp = SynthParams(sensor_width=cfg.sensor_width, sensor_height=cfg.sensor_height)
    sp = replace(
        sp,
        seed=opt("input", "seed", sp.seed, int),
        route_length=opt("input", "route_length", sp.route_length, float),
        mean_speed=opt("input", "mean_speed", sp.mean_speed, float),
        speed_variation=opt("input", "speed_variation", sp.speed_variation, float),
        stop_count=opt("input", "stop_count", sp.stop_count, int),
        event_rate_per_meter=opt("input", "event_rate_per_meter",
                                 sp.event_rate_per_meter, float),
        scene_grid=opt("input", "scene_grid", sp.scene_grid, int),
        noise_rate=opt("input", "noise_rate", sp.noise_rate, float),
        appearance_shift=opt("input", "appearance_shift", sp.appearance_shift, float),
    )
    cfg.synth = sp
    qs = opt("input", "query_seed", None, int)
    cfg.query_seed = qs

    cfg.binning = BinningConfig(
        mode=opt("binning", "mode", "time"),
        delta_t=opt("binning", "delta_t", 0.5, float),
        n=opt("binning", "n", 5000, int),
        t0=opt("binning", "t0", None, float),
    )
    cfg.recon = rec_mod.ReconParams(
        method=opt("reconstruction", "method", "count_polarity"),
        lambda_s=opt("reconstruction", "lambda", None, float),
        tanh_scale=opt("reconstruction", "tanh_scale", 1.0, float),
    )
    cfg.external_query_frames = opt("reconstruction", "external_query", "")
    cfg.external_ref_frames = opt("reconstruction", "external_ref", "")

    cfg.descriptor_source = opt("descriptor", "source", "builtin")
    cfg.descriptor_grid = opt("descriptor", "grid", desc_mod.DEFAULT_GRID, int)
    cfg.external_query_desc = opt("descriptor", "external_query", "")
    cfg.external_ref_desc = opt("descriptor", "external_ref", "")

    cfg.sequence = SequenceConfig(
        matcher=opt("sequence", "matcher", "adaptive"),
        length=opt("sequence", "length", 10, int),
        normalize=opt("sequence", "normalize", True, bool),
        epsilon=opt("sequence", "epsilon", 1e-8, float),
    )

    cfg.ensemble_enabled = opt("ensemble", "enabled", False, bool)
    members_raw = opt("ensemble", "members", "")
    if members_raw:
        members = []
        for token in members_raw.split():
            if ":" not in token:
                raise ConfigError(f"ensemble.members entry {token!r} must be method:delta_t")
            method, dt = token.split(":", 1)
            if method not in rec_mod.ReconParams.METHODS:
                raise ConfigError(f"unknown reconstruction {method!r} in ensemble.members")
            members.append((method, _coerce("ensemble", "members", dt, float)))
        cfg.ensemble_members = members
    cfg.ensemble_manifest = opt("ensemble", "manifest", "")
    cfg.target_rate = opt("ensemble", "target_rate", 1.0, float)

    cfg.tolerance_m = opt("eval", "tolerance_m", eval_mod.DEFAULT_TOLERANCE_M, float)
    cfg.group = opt("eval", "group", "")
    cfg.output_dir = opt("output", "dir", "out")
    cfg.write_pgm = opt("output", "pgm", False, bool)

    cfg.validate()
    return cfg


def canonical_lines(cfg: PipelineConfig) -> list[str]:
    """Canonical ``section.key=value`` lines (output section excluded)."""
    sp = cfg.synth
    pairs = {
        "input.mode": cfg.input_mode,
        "input.sensor_width": cfg.sensor_width,
        "input.sensor_height": cfg.sensor_height,
        "input.hot_pixel_rate": repr(cfg.hot_pixel_rate),
        "binning.mode": cfg.binning.mode,
        "binning.delta_t": repr(cfg.binning.delta_t),
        "binning.n": cfg.binning.n,
        "binning.t0": repr(cfg.binning.t0),
        "reconstruction.method": cfg.recon.method,
        "reconstruction.lambda": repr(cfg.recon.lambda_s),
        "reconstruction.tanh_scale": repr(cfg.recon.tanh_scale),
        "descriptor.source": cfg.descriptor_source,
        "descriptor.grid": cfg.descriptor_grid,
        "sequence.matcher": cfg.sequence.matcher,
        "sequence.length": cfg.sequence.length,
        "sequence.normalize": cfg.sequence.normalize,
        "sequence.epsilon": repr(cfg.sequence.epsilon),
        "ensemble.enabled": cfg.ensemble_enabled,
        "ensemble.members": " ".join(f"{m}:{dt:g}" for m, dt in cfg.ensemble_members),
        "ensemble.manifest": cfg.ensemble_manifest,
        "ensemble.target_rate": repr(cfg.target_rate),
        "eval.tolerance_m": repr(cfg.tolerance_m),
        "eval.group": cfg.group,
    }
    if cfg.input_mode == "synth":
        pairs.update({
            "input.seed": sp.seed,
            "input.query_seed": cfg.query_seed,
            "input.route_length": repr(sp.route_length),
            "input.mean_speed": repr(sp.mean_speed),
            "input.speed_variation": repr(sp.speed_variation),
            "input.stop_count": sp.stop_count,
            "input.event_rate_per_meter": repr(sp.event_rate_per_meter),
            "input.scene_grid": sp.scene_grid,
            "input.noise_rate": repr(sp.noise_rate),
            "input.appearance_shift": repr(sp.appearance_shift),
        })
    else:
        pairs.update({
            "input.query_events": cfg.query_events,
            "input.query_gps": cfg.query_gps,
            "input.ref_events": cfg.ref_events,
            "input.ref_gps": cfg.ref_gps,
        })
    if cfg.descriptor_source == "external":
        pairs.update({
            "descriptor.external_query": cfg.external_query_desc,
            "descriptor.external_ref": cfg.external_ref_desc,
        })
    if cfg.recon.method == "external":
        pairs.update({
            "reconstruction.external_query": cfg.external_query_frames,
            "reconstruction.external_ref": cfg.external_ref_frames,
        })
    return [f"{k}={pairs[k]}" for k in sorted(pairs)]


def fingerprint_of(lines: list[str]) -> str:
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


def config_fingerprint(cfg: PipelineConfig) -> str:
    return fingerprint_of(canonical_lines(cfg))


# ---------------------------------------------------------------------------
# File-level stages (shared by run_pipeline and the CLI subcommands)
# ---------------------------------------------------------------------------

def stage_synth(params: SynthParams, events_path, gps_path) -> None:
    stream, track = generate_traverse(params)
    ev_mod.write_events_binary(stream, events_path)
    eval_mod.write_track_csv(track, gps_path)


def slice_events(stream: ev_mod.EventStream, binning: BinningConfig) -> list[ev_mod.EventBin]:
    if binning.mode == "count":
        return ev_mod.slice_by_count(stream, binning.n)
    return ev_mod.slice_by_time(stream, binning.delta_t, binning.t0)


def stage_slice_manifest(events_path, binning: BinningConfig, out_path,
                         sensor_width=0, sensor_height=0) -> int:
    """Write a bin manifest CSV: index,count,t_start_us,t_end_us,partial."""
    stream = ev_mod.load_events(events_path, sensor_width, sensor_height)
    bins = slice_events(stream, binning)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,count,t_start_us,t_end_us,partial\n")
        for b in bins:
            fh.write(f"{b.index},{len(b)},{round(b.t_start * ev_mod.US_PER_S)},"
                     f"{round(b.t_end * ev_mod.US_PER_S)},{int(b.partial)}\n")
    return len(bins)


def stage_reconstruct(events_path, binning: BinningConfig,
                      recon: rec_mod.ReconParams, out_evpf,
                      sensor_width=0, sensor_height=0,
                      hot_pixel_rate: float = 0.0) -> int:
    """events file -> EVPF of rendered frames; returns the frame count."""
    stream = ev_mod.load_events(events_path, sensor_width, sensor_height)
    if hot_pixel_rate > 0:
        stream = ev_mod.filter_hot_pixels(stream, hot_pixel_rate)
    bins = [b for b in slice_events(stream, binning) if len(b) > 0]
    frames = []
    for b in bins:
        raw = rec_mod.reconstruct_bin(b, recon, stream.sensor_width,
                                      stream.sensor_height)
        frames.append(rec_mod.normalize(raw, recon))
    rec_mod.save_frames(frames, out_evpf, stream.sensor_width, stream.sensor_height)
    return len(frames)


def stage_describe(evpf_path, grid: int, label: str, out_evpd) -> int:
    frames = rec_mod.ingest_external_frames(evpf_path)
    ds = desc_mod.describe_frames(frames, grid, label)
    desc_mod.save_descriptors(ds, out_evpd)
    return len(ds)


def stage_align(member_descs: dict[str, tuple[str, str]], target_rate: float,
                out_dir) -> dict[str, tuple[str, str]]:
    """Align member descriptor files onto the shared tick grid.

    ``member_descs`` maps tag -> (query EVPD path, ref EVPD path); aligned
    copies are written under out_dir as ``<tag>.query.evpd`` /
    ``<tag>.ref.evpd``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tags = sorted(member_descs)
    q_sets = {t: desc_mod.load_descriptors(member_descs[t][0]) for t in tags}
    r_sets = {t: desc_mod.load_descriptors(member_descs[t][1]) for t in tags}
    q_sel = ens_mod.align_members([q_sets[t].timestamps for t in tags], target_rate)
    r_sel = ens_mod.align_members([r_sets[t].timestamps for t in tags], target_rate)
    out = {}
    for t, qs, rs in zip(tags, q_sel, r_sel):
        qd = q_sets[t]
        rd = r_sets[t]
        q_path = out_dir / f"{t}.query.evpd"
        r_path = out_dir / f"{t}.ref.evpd"
        desc_mod.save_descriptors(desc_mod.DescriptorSet(
            qd.descriptors[qs], qd.timestamps[qs], qd.label), q_path)
        desc_mod.save_descriptors(desc_mod.DescriptorSet(
            rd.descriptors[rs], rd.timestamps[rs], rd.label), r_path)
        out[t] = (str(q_path), str(r_path))
    return out


def stage_similarity(query_evpd, ref_evpd, tag: str, out_csv,
                     pgm_path=None) -> None:
    q = desc_mod.load_descriptors(query_evpd)
    r = desc_mod.load_descriptors(ref_evpd)
    sim = sim_mod.similarity_matrix(q, r, sim_mod.Provenance(extra=tag))
    sim_mod.save_matrix_csv(sim, out_csv)
    if pgm_path is not None:
        sim_mod.save_matrix_pgm(sim, pgm_path)


def stage_seqmatch(in_csv, seq: SequenceConfig, out_csv, pgm_path=None) -> None:
    sim = sim_mod.load_matrix_csv(in_csv)
    in_tag = sim.provenance.tag()
    if seq.matcher == "baseline":
        out = seq_mod.seq_match_baseline(sim, seq.length)
    elif seq.matcher == "adaptive":
        out = seq_mod.seq_match_adaptive(
            sim, seq_mod.SeqConfig(seq.length, seq.normalize, seq.epsilon))
    else:
        out = sim
    out.provenance = sim_mod.Provenance(
        extra=f"{in_tag}_{seq.matcher}{seq.length}" if seq.matcher != "none" else in_tag)
    sim_mod.save_matrix_csv(out, out_csv)
    if pgm_path is not None:
        sim_mod.save_matrix_pgm(out, pgm_path)


def stage_fuse(manifest: list[tuple[str, str]], target_rate: float, out_csv) -> None:
    """Fuse member similarity dumps listed as (tag, csv path) pairs."""
    members = []
    for tag, path in manifest:
        m = sim_mod.load_matrix_csv(path)
        m.provenance = sim_mod.Provenance(extra=tag)
        members.append(m)
    fused = ens_mod.fuse(ens_mod.EnsembleSet(members, alignment_rate=target_rate))
    sim_mod.save_matrix_csv(fused, out_csv)


def parse_manifest(path) -> list[tuple[str, str]]:
    """Ensemble manifest: one ``tag = path`` line per member."""
    out = []
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'tag = path'")
            tag, p = (part.strip() for part in line.split("=", 1))
            member_path = Path(p)
            if not member_path.is_absolute():
                member_path = base / member_path
            out.append((tag, str(member_path)))
    if not out:
        raise DataError(f"{path}: empty manifest")
    return out


def stage_eval(matrix_csv, query_gps, ref_gps, tolerance_m: float, group: str,
               provenance: dict, csv_out, json_out) -> eval_mod.EvalReport:
    sim = sim_mod.load_matrix_csv(matrix_csv)
    matches = sim_mod.argmax_matches(sim)
    q_track = eval_mod.load_track(query_gps)
    r_track = eval_mod.load_track(ref_gps)
    q_pos, _ = eval_mod.interpolate_positions(q_track, sim.query_timestamps)
    r_pos, _ = eval_mod.interpolate_positions(r_track, sim.ref_timestamps)
    report = eval_mod.recall_at_1(matches, q_pos, r_pos, tolerance_m,
                                  sim.query_timestamps, sim.ref_timestamps)
    report.group = group
    report.provenance = provenance
    eval_mod.emit_report(report, csv_path=csv_out, json_path=json_out)
    return report


# ---------------------------------------------------------------------------
# Whole-pipeline runner
# ---------------------------------------------------------------------------

def _member_tag(method: str, delta_t: float, grid: int) -> str:
    return f"{method}_dt{delta_t:g}_g{grid}"


def _build_member(args) -> tuple[str, tuple[str, str]]:
    """Reconstruct + describe one ensemble member (runs in a worker)."""
    (tag, method, delta_t, cfg_dict) = args
    cfg = cfg_dict
    binning = BinningConfig(mode="time", delta_t=delta_t, t0=cfg["t0"])
    recon = rec_mod.ReconParams(method=method, lambda_s=cfg["lambda_s"],
                                tanh_scale=cfg["tanh_scale"])
    out = Path(cfg["output_dir"])
    paths = {}
    for side in ("query", "ref"):
        evpf = out / "frames" / f"{tag}.{side}.evpf"
        evpd = out / "descriptors" / f"{tag}.{side}.evpd"
        stage_reconstruct(cfg[f"{side}_events"], binning, recon, evpf,
                          cfg["sensor_width"], cfg["sensor_height"],
                          cfg["hot_pixel_rate"])
        stage_describe(evpf, cfg["grid"], f"{tag}.{side}", evpd)
        paths[side] = str(evpd)
    return tag, (paths["query"], paths["ref"])


def run_pipeline(cfg: PipelineConfig) -> eval_mod.EvalReport:
    """Execute the configured pipeline; returns the final report.

    Every intermediate is persisted under the output directory. The run is
    deterministic for a given config, including under worker parallelism.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    for sub in ("", "frames", "descriptors", "aligned", "similarity", "seqmatch"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    fp = config_fingerprint(cfg)
    (out / "config.txt").write_text(
        "\n".join(canonical_lines(cfg) + [f"fingerprint={fp}"]) + "\n",
        encoding="utf-8")

    # --- input stage
    if cfg.input_mode == "synth":
        query_events = out / "query.events.evpr"
        query_gps = out / "query.gps.csv"
        ref_events = out / "ref.events.evpr"
        ref_gps = out / "ref.gps.csv"
        # appearance_shift applies between the pair: the reference sees
        # the base scene, the query the shifted one
        ref_params = replace(cfg.synth, appearance_shift=0.0)
        stage_synth(ref_params, ref_events, ref_gps)
        q_seed = cfg.query_seed if cfg.query_seed is not None else cfg.synth.seed + 1
        q_stream, q_track = perturb_traverse(ref_params, cfg.synth.appearance_shift,
                                             q_seed)
        ev_mod.write_events_binary(q_stream, query_events)
        eval_mod.write_track_csv(q_track, query_gps)
    else:
        query_events, query_gps = cfg.query_events, cfg.query_gps
        ref_events, ref_gps = cfg.ref_events, cfg.ref_gps

    # --- member construction
    if cfg.ensemble_enabled and cfg.ensemble_manifest:
        manifest = parse_manifest(cfg.ensemble_manifest)
        seq_files = [(tag, path) for tag, path in manifest]
        return _finish_fused(cfg, out, seq_files, query_gps, ref_gps, fp)

    if cfg.ensemble_enabled:
        members = [(m, dt) for m, dt in cfg.ensemble_members]
    else:
        members = [(cfg.recon.method, cfg.binning.delta_t)]

    member_descs: dict[str, tuple[str, str]] = {}
    if cfg.descriptor_source == "external":
        tag = _member_tag(cfg.recon.method, cfg.binning.delta_t, cfg.descriptor_grid)
        member_descs[tag] = (cfg.external_query_desc, cfg.external_ref_desc)
    elif cfg.recon.method == "external" and not cfg.ensemble_enabled:
        tag = _member_tag("external", cfg.binning.delta_t, cfg.descriptor_grid)
        q_evpd = out / "descriptors" / f"{tag}.query.evpd"
        r_evpd = out / "descriptors" / f"{tag}.ref.evpd"
        stage_describe(cfg.external_query_frames, cfg.descriptor_grid,
                       f"{tag}.query", q_evpd)
        stage_describe(cfg.external_ref_frames, cfg.descriptor_grid,
                       f"{tag}.ref", r_evpd)
        member_descs[tag] = (str(q_evpd), str(r_evpd))
    else:
        cfg_dict = {
            "t0": cfg.binning.t0,
            "lambda_s": cfg.recon.lambda_s,
            "tanh_scale": cfg.recon.tanh_scale,
            "output_dir": cfg.output_dir,
            "query_events": str(query_events),
            "ref_events": str(ref_events),
            "sensor_width": cfg.sensor_width,
            "sensor_height": cfg.sensor_height,
            "hot_pixel_rate": cfg.hot_pixel_rate,
            "grid": cfg.descriptor_grid,
        }
        jobs = []
        for method, dt in members:
            if cfg.binning.mode == "count" and not cfg.ensemble_enabled:
                # single-member count binning keeps the configured N
                tag = f"{method}_N{cfg.binning.n}_g{cfg.descriptor_grid}"
                binning = BinningConfig(mode="count", n=cfg.binning.n)
                recon = rec_mod.ReconParams(method=method, lambda_s=cfg.recon.lambda_s,
                                            tanh_scale=cfg.recon.tanh_scale)
                paths = {}
                for side, events in (("query", query_events), ("ref", ref_events)):
                    evpf = out / "frames" / f"{tag}.{side}.evpf"
                    evpd = out / "descriptors" / f"{tag}.{side}.evpd"
                    stage_reconstruct(events, binning, recon, evpf,
                                      cfg.sensor_width, cfg.sensor_height,
                                      cfg.hot_pixel_rate)
                    stage_describe(evpf, cfg.descriptor_grid, f"{tag}.{side}", evpd)
                    paths[side] = str(evpd)
                member_descs[tag] = (paths["query"], paths["ref"])
            else:
                tag = _member_tag(method, dt, cfg.descriptor_grid)
                jobs.append((tag, method, dt, cfg_dict))
        workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for tag, paths in pool.map(_build_member, jobs):
                    member_descs[tag] = paths
        else:
            for job in jobs:
                tag, paths = _build_member(job)
                member_descs[tag] = paths

    # --- alignment (ensemble only), similarity, sequence matching
    if cfg.ensemble_enabled:
        member_descs = stage_align(member_descs, cfg.target_rate, out / "aligned")

    seq_files = []
    for tag in sorted(member_descs):
        q_evpd, r_evpd = member_descs[tag]
        sim_csv = out / "similarity" / f"{tag}.csv"
        pgm = (out / "similarity" / f"{tag}.pgm") if cfg.write_pgm else None
        stage_similarity(q_evpd, r_evpd, tag, sim_csv, pgm)
        seq_csv = out / "seqmatch" / f"{tag}.csv"
        stage_seqmatch(sim_csv, cfg.sequence, seq_csv)
        seq_files.append((tag, str(seq_csv)))

    return _finish_fused(cfg, out, seq_files, query_gps, ref_gps, fp)


def _finish_fused(cfg: PipelineConfig, out: Path, seq_files, query_gps, ref_gps,
                  fp: str) -> eval_mod.EvalReport:
    if len(seq_files) > 1:
        fused_csv = out / "fused.csv"
        stage_fuse(seq_files, cfg.target_rate, fused_csv)
        final_csv = fused_csv
        recon_name = "ensemble"
    else:
        final_csv = Path(seq_files[0][1])
        recon_name = cfg.recon.method
    provenance = {
        "reconstruction": recon_name,
        "extractor": "builtin" if cfg.descriptor_source == "builtin" else "external",
        "resolution_s": cfg.binning.delta_t if cfg.binning.mode == "time" else 0.0,
        "seq_len": cfg.sequence.length if cfg.sequence.matcher != "none" else 0,
        "fingerprint": fp,
    }
    return stage_eval(final_csv, query_gps, ref_gps, cfg.tolerance_m, cfg.group,
                      provenance, out / "report.csv", out / "report.json")
