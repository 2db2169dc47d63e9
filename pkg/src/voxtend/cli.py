"""Command-line surface: features, train, sample, extend-eval, metrics.

Every command validates its full configuration before touching the
filesystem and echoes the resolved config into the output directory.
Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import audio, estimators, guidance, pipeline, sveval
from .config import RunConfig, apply_setting, load_config
from .errors import ConfigError, FormatError, TrainingDivergence, VoxtendError
from .rng import SeedStream
from .schedule import build_schedule
from .toydata import ToyWorld

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_DIVERGENCE = 3

CACHE_ENV = "VOXTEND_CACHE"


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            cfg = load_config(fh, cfg)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_setting(cfg, key.strip(), value.strip())
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(os.environ.get(CACHE_ENV, "") or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: RunConfig, out: Path) -> None:
    (out / "run-config.txt").write_text(cfg.render())


def _require_file(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is not configured")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def cmd_features(args) -> int:
    cfg = _load_run_config(args)
    fb = cfg.fbank_config()
    wavs = [Path(p) for p in args.wav]
    for p in wavs:
        if not p.is_file():
            raise ConfigError(f"input wav not found: {p}")
    out = _out_dir(cfg)
    _echo_config(cfg, out)
    for p in wavs:
        wave = audio.read_wav(p.read_bytes())
        voiced = audio.vad_filter(wave, cfg.vad_frame_len, cfg.vad_threshold_db)
        if len(voiced.samples) < fb.frame_samples:
            raise VoxtendError(f"{p}: no speech left after VAD")
        feats = audio.fbank(voiced, fb)
        with open(out / (p.stem + ".fbank"), "w") as fh:
            audio.save_feature_map(feats, fh)
        print(f"{p} -> {out / (p.stem + '.fbank')} ({feats.shape[0]}x{feats.shape[1]})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.estimator_checkpoint:
        raise ConfigError("estimator_checkpoint is not configured")
    out = _out_dir(cfg)
    _echo_config(cfg, out)

    master = SeedStream(cfg.master_seed)
    world = ToyWorld(master.derive("world"), clusters=cfg.toy_clusters,
                     frames=cfg.toy_frames, bins=cfg.toy_bins, emb_dim=cfg.toy_emb_dim,
                     mean_scale=cfg.toy_mean_scale, cluster_std=cfg.toy_cluster_std)
    sched = build_schedule(cfg.schedule_kind, cfg.total_steps)
    net = estimators.SmallNetEstimator(
        cfg.toy_frames, cfg.toy_bins, cfg.toy_emb_dim, cfg.total_steps,
        hidden=(cfg.hidden1, cfg.hidden2), seed=master.derive("init"))
    hyper = estimators.TrainConfig(steps=cfg.train_steps, batch_size=cfg.batch_size,
                                   learning_rate=cfg.learning_rate, p_uncond=cfg.p_uncond)
    trained, losses = estimators.train_estimator(world, net, hyper, sched,
                                                 master.derive("train"))

    with open(cfg.estimator_checkpoint, "w") as fh:
        estimators.save_net(trained, fh)
    if cfg.embedder_checkpoint:
        with open(cfg.embedder_checkpoint, "w") as fh:
            estimators.save_embedder(world.embedder, fh)
    with open(out / "loss_curve.csv", "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(losses):
            fh.write(f"{i},{v:.9f}\n")
    print(f"trained {cfg.train_steps} steps; final loss {losses[-1]:.6f}")
    print(f"checkpoint -> {cfg.estimator_checkpoint}")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_run_config(args)
    est_path = _require_file(cfg.estimator_checkpoint, "estimator_checkpoint")
    guide_map = None
    if args.guide:
        emb_path = _require_file(cfg.embedder_checkpoint, "embedder_checkpoint")
        guide_path = _require_file(args.guide, "guide feature file")
        with open(emb_path) as fh:
            embedder = estimators.load_embedder(fh)
        with open(guide_path) as fh:
            guide_map = audio.load_feature_map(fh)
    out = _out_dir(cfg)
    _echo_config(cfg, out)

    with open(est_path) as fh:
        net = estimators.load_net(fh)
    sched = build_schedule(cfg.schedule_kind, cfg.total_steps)
    if sched.total_steps > net.total_steps:
        raise ConfigError(f"schedule has {sched.total_steps} steps but the "
                          f"estimator was built for {net.total_steps}")
    master = SeedStream(cfg.master_seed)
    for i in range(args.count):
        seed = master.derive("sample", i)
        if guide_map is None:
            x = guidance.sample_unguided(lambda xt, t: net(xt, t, None),
                                         net.frames, net.bins, sched, seed)
        else:
            ref = embedder.embed(guide_map)
            gcfg = guidance.GuidanceConfig(mode=cfg.guidance_mode,
                                           scale=cfg.resolved_scale(),
                                           target_frames=net.frames)
            if cfg.guidance_mode == "external":
                trace = None
                if args.trace:
                    trace = open(out / f"sample_{i:03d}.trace", "w")
                try:
                    x = guidance.sample_external(ref, gcfg,
                                                 lambda xt, t: net(xt, t, None),
                                                 embedder, sched, seed, trace=trace)
                finally:
                    if trace is not None:
                        trace.close()
            else:
                x = guidance.sample_builtin(ref, gcfg, net, net.bins, sched, seed)
        with open(out / f"sample_{i:03d}.fbank", "w") as fh:
            audio.save_feature_map(x, fh)
    print(f"wrote {args.count} sample(s) to {out}")
    return EXIT_OK


def _build_conditions(cfg: RunConfig) -> list[pipeline.Condition]:
    gcfg = guidance.GuidanceConfig(
        mode=cfg.guidance_mode, scale=cfg.resolved_scale(),
        target_frames=max(1, int(round(cfg.gen_duration / cfg.frame_shift))))
    conds = []
    for name in cfg.conditions.split(","):
        kind = name.strip()
        if kind in ("dm", "dm_plus"):
            conds.append(pipeline.Condition(kind=kind, clip_duration=cfg.clip_duration,
                                            gen_duration=cfg.gen_duration, guidance=gcfg))
        else:
            conds.append(pipeline.Condition(kind=kind, clip_duration=cfg.clip_duration))
    return conds


def cmd_extend_eval(args) -> int:
    cfg = _load_run_config(args)
    trials_path = _require_file(args.trials, "trials file")
    est_path = _require_file(cfg.estimator_checkpoint, "estimator_checkpoint")
    emb_path = _require_file(cfg.embedder_checkpoint, "embedder_checkpoint")
    with open(trials_path) as fh:
        trials = sveval.load_trials(fh)
    feature_dir = Path(args.features_dir)
    referenced = sorted({t.enroll_ref for t in trials} | {t.test_ref for t in trials})
    for ref in referenced:
        if not (feature_dir / ref).is_file():
            raise ConfigError(f"feature file not found: {feature_dir / ref}")

    out = _out_dir(cfg)
    _echo_config(cfg, out)
    with open(est_path) as fh:
        net = estimators.load_net(fh)
    with open(emb_path) as fh:
        embedder = estimators.load_embedder(fh)
    utterances = {}
    for ref in referenced:
        with open(feature_dir / ref) as fh:
            utterances[ref] = audio.load_feature_map(fh)
    sched = build_schedule(cfg.schedule_kind, cfg.total_steps)
    estimator = net if cfg.guidance_mode == "built-in" else (lambda xt, t: net(xt, t, None))

    sink = open(out / "embeddings.csv", "w") if args.dump_embeddings else None
    try:
        results = pipeline.run_protocol(
            utterances, trials, _build_conditions(cfg), embedder, estimator, sched,
            SeedStream(cfg.master_seed), frame_shift=cfg.frame_shift,
            extend_test_only=cfg.extend_test_only, embedding_sink=sink)
    finally:
        if sink is not None:
            sink.close()
    csv_text = pipeline.results_csv(results)
    (out / "results.csv").write_text(csv_text)
    sys.stdout.write(csv_text)
    for r in results:
        sys.stdout.write(sveval.metric_lines(
            [(f"eer[{r.condition.label}]", r.eer),
             (f"mindcf[{r.condition.label}]", r.min_dcf)]))
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = _load_run_config(args)
    path = _require_file(args.scores, "score file")
    scores, same = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",") if "," in line else line.split()
            if len(parts) != 2 or parts[0] not in ("0", "1"):
                raise FormatError(f"line {lineno}: expected '<0|1>,<score>', got {line!r}")
            try:
                scores.append(float(parts[1]))
            except ValueError:
                raise FormatError(f"line {lineno}: bad score {parts[1]!r}") from None
            same.append(parts[0] == "1")
    score_set = sveval.ScoreSet(scores=np.array(scores), same=np.array(same))
    sys.stdout.write(sveval.metric_lines(
        [("eer", sveval.eer(score_set)), ("mindcf", sveval.min_dcf(score_set))]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxtend", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable; wins over the file)")

    p = sub.add_parser("features", help="WAV -> VAD -> log-FBank feature files")
    common(p)
    p.add_argument("wav", nargs="+", help="input PCM16 mono WAV files")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the toy noise estimator")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw feature maps from the reverse chain")
    common(p)
    p.add_argument("--guide", help="feature file whose embedding guides sampling")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--trace", action="store_true",
                   help="write per-step similarity traces (external mode)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("extend-eval", help="run the clip/extend/score protocol")
    common(p)
    p.add_argument("trials", help="trial file: '<0|1> <enroll> <test>' per line")
    p.add_argument("--features-dir", default=".", help="directory of referenced feature files")
    p.add_argument("--dump-embeddings", action="store_true",
                   help="also write per-utterance embeddings as CSV")
    p.set_defaults(func=cmd_extend_eval)

    p = sub.add_parser("metrics", help="EER/MinDCF over a '<0|1>,<score>' CSV")
    common(p)
    p.add_argument("scores", help="score CSV file")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (VoxtendError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
