"""Command-line pipeline: gen-data, pretrain, finetune, predict, evaluate,
backtest, report.

One JSON config drives every stage; the seed is mandatory and all stage RNG
streams derive from it, so identical config+seed reruns produce byte-identical
numeric artifacts. Exit codes: 0 success, 1 usage/config, 2 data error,
3 missing upstream artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .backtest import (PORTFOLIO_KINDS, PortfolioSpec, backtest,
                       compare_strategies, sentiment_score, write_comparison_csv,
                       write_curve_csv, write_returns_csv, write_stats_json)
from .checkpoint import load_params, restore_params, save_params
from .corpus import (SignalSpec, UniverseSpec, Vocabulary, build_demo_vocabulary,
                     generate_synthetic, tokenize)
from .data import (build_instances, load_news, load_universe, split_dataset,
                   write_news_jsonl, write_universe_csv)
from .deciles import (Forecast, compute_decile_table, read_forecast_csv,
                      write_decile_csv, write_forecast_csv)
from .errors import ConfigError, DataError, DependencyError
from .forecaster import (FineTuneConfig, ForecastHead, attach_lora, finetune,
                         predict_many)
from .lexicon import DEMO_LEXICON
from .model import MiniLlm, ModelConfig, PretrainSchedule, build_model, pretrain

COMMANDS = ("gen-data", "pretrain", "finetune", "predict", "evaluate",
            "backtest", "report")


def derive_seed(seed: int, stream: int) -> int:
    """Stable per-stage child seed."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass
class RunConfig:
    seed: int
    out_dir: Path
    raw: dict

    @classmethod
    def load(cls, path, out_override=None, seed_override=None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        seed = seed_override if seed_override is not None else raw.get("seed")
        if seed is None:
            raise ConfigError("config must set a seed (or pass --seed)")
        out_dir = Path(out_override) if out_override else Path(raw.get("out_dir", "run"))
        return cls(seed=int(seed), out_dir=out_dir, raw=raw)

    def section(self, name: str) -> dict:
        value = self.raw.get(name)
        if not isinstance(value, dict):
            raise ConfigError(f"config is missing the {name!r} section")
        return value

    def path(self, artifact: str) -> Path:
        override = self.raw.get("paths", {}).get(artifact)
        defaults = {
            "news": "news.jsonl", "universe": "universe.csv",
            "vocab": "vocab.json", "lexicon": "lexicon.json",
            "model": "model.ckpt.json", "model_config": "model_config.json",
            "adapter": "adapter.ckpt.json", "finetune_meta": "finetune_meta.json",
            "forecasts": "forecasts.csv", "decile_table": "decile_table.csv",
            "comparison": "comparison.csv", "report": "report.md",
        }
        return Path(override) if override else self.out_dir / defaults[artifact]


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing {path}; run the {producer} stage first")
    return path


def _write_loss_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_gen_data(cfg: RunConfig) -> None:
    syn = cfg.section("synthetic")
    data = cfg.section("data")
    effects = {str(k): float(v) for k, v in syn["signal"].items()}
    vocab = build_demo_vocabulary(sorted(effects))
    spec = UniverseSpec(n_stocks=int(syn["n_stocks"]),
                        start=date.fromisoformat(syn["start"]),
                        n_periods=int(syn["n_periods"]),
                        rebalance=syn.get("rebalance", "monthly"),
                        window_days=int(data.get("window_days", 7)))
    signal = SignalSpec(effects=effects,
                        noise_sigma=float(syn.get("noise_sigma", 0.0)),
                        base_return=float(syn.get("base_return", 0.0)))
    news, entries = generate_synthetic(spec, signal, vocab, derive_seed(cfg.seed, 0))
    write_news_jsonl(news, cfg.path("news"))
    write_universe_csv(entries, cfg.path("universe"))
    vocab.save(cfg.path("vocab"))
    cfg.path("lexicon").write_text(json.dumps(DEMO_LEXICON, sort_keys=True))
    print(f"gen-data: {len(news)} news items, {len(entries)} universe entries "
          f"-> {cfg.out_dir}")


def _model_config(cfg: RunConfig, vocab: Vocabulary) -> ModelConfig:
    section = dict(cfg.section("model"))
    section.setdefault("vocab_size", vocab.size)
    try:
        mc = ModelConfig(**section)
    except TypeError as exc:
        raise ConfigError(f"bad model section: {exc}") from exc
    mc.validate()
    return mc


def stage_pretrain(cfg: RunConfig) -> None:
    vocab = Vocabulary.load(_require(cfg.path("vocab"), "gen-data"))
    news = load_news(_require(cfg.path("news"), "gen-data"))
    corpus = [ids for n in news if (ids := tokenize(n.text, vocab))]
    mc = _model_config(cfg, vocab)
    model = build_model(mc, derive_seed(cfg.seed, 1))
    section = cfg.section("pretrain")
    schedule = PretrainSchedule(steps=int(section.get("steps", 500)),
                                batch=int(section.get("batch", 32)),
                                peak_lr=float(section.get("peak_lr", 2e-3)),
                                warmup=int(section.get("warmup", 100)),
                                seed=derive_seed(cfg.seed, 2))
    losses = pretrain(model, corpus, schedule)
    save_params(cfg.path("model"), model.base_params())
    cfg.path("model_config").write_text(json.dumps(mc.to_dict(), sort_keys=True))
    _write_loss_csv(cfg.out_dir / "pretrain_losses.csv", ["step", "loss"],
                    [(i + 1, v) for i, v in enumerate(losses)])
    print(f"pretrain[{mc.arch_kind}]: loss {losses[0]:.4f} -> {losses[-1]:.4f} "
          f"over {schedule.steps} steps")


def _load_model(cfg: RunConfig) -> MiniLlm:
    mc_path = _require(cfg.path("model_config"), "pretrain")
    mc = ModelConfig.from_dict(json.loads(mc_path.read_text()))
    model = build_model(mc, 0)
    restore_params(_require(cfg.path("model"), "pretrain"), model.base_params())
    return model


def _split(cfg: RunConfig, mc: ModelConfig, vocab: Vocabulary):
    data = cfg.section("data")
    news = load_news(_require(cfg.path("news"), "gen-data"))
    entries = load_universe(_require(cfg.path("universe"), "gen-data"))
    instances = build_instances(entries, news, vocab,
                                window_days=int(data.get("window_days", 7)),
                                max_len=mc.max_len, arch_kind=mc.arch_kind)
    return split_dataset(instances,
                         train_end=date.fromisoformat(data["train_end"]),
                         val_end=date.fromisoformat(data["val_end"])), entries


def _finetune_config(cfg: RunConfig) -> FineTuneConfig:
    section = cfg.section("finetune")
    ft = FineTuneConfig(batch=int(section.get("batch", 32)),
                        peak_lr=float(section.get("peak_lr", 1e-5)),
                        warmup=int(section.get("warmup", 100)),
                        epochs=int(section.get("epochs", 10)),
                        pooling=section.get("pooling", "aggregated"),
                        lora_rank=int(section.get("lora_rank", 4)),
                        lora_alpha=float(section.get("lora_alpha",
                                                     section.get("lora_rank", 4))),
                        seed=derive_seed(cfg.seed, 4))
    ft.validate()
    return ft


def stage_finetune(cfg: RunConfig) -> None:
    vocab = Vocabulary.load(_require(cfg.path("vocab"), "gen-data"))
    model = _load_model(cfg)
    split, _ = _split(cfg, model.config, vocab)
    if not split.train:
        raise DataError("no training instances; check the data section dates")
    ft = _finetune_config(cfg)
    attach_lora(model, ft.lora_rank, ft.lora_alpha, derive_seed(cfg.seed, 3))
    head = ForecastHead(model.config.d_model)
    result = finetune(model, head, split.train, split.validation, ft)
    save_params(cfg.path("adapter"), {**model.lora_params(), **head.params()})
    meta = {"pooling": ft.pooling, "lora_rank": ft.lora_rank,
            "lora_alpha": ft.lora_alpha, "best_epoch": result.best_epoch}
    cfg.path("finetune_meta").write_text(json.dumps(meta, sort_keys=True))
    (cfg.out_dir / "split_manifest.json").write_text(
        json.dumps(split.manifest(), sort_keys=True))
    _write_loss_csv(cfg.out_dir / "finetune_losses.csv",
                    ["epoch", "train_mse", "val_mse"],
                    [(i, tr, va) for i, (tr, va) in
                     enumerate(zip(result.train_curve, result.val_curve))])
    print(f"finetune: best epoch {result.best_epoch}, "
          f"val MSE {result.val_curve[result.best_epoch]:.6f}")


def _load_adapted_model(cfg: RunConfig):
    model = _load_model(cfg)
    meta_path = _require(cfg.path("finetune_meta"), "finetune")
    meta = json.loads(meta_path.read_text())
    attach_lora(model, int(meta["lora_rank"]), float(meta["lora_alpha"]), 0)
    head = ForecastHead(model.config.d_model)
    restore_params(_require(cfg.path("adapter"), "finetune"),
                   {**model.lora_params(), **head.params()})
    return model, head, meta["pooling"]


def stage_predict(cfg: RunConfig) -> None:
    vocab = Vocabulary.load(_require(cfg.path("vocab"), "gen-data"))
    model, head, pooling = _load_adapted_model(cfg)
    split, _ = _split(cfg, model.config, vocab)
    if not split.test:
        raise DataError("no test instances; check the data section dates")
    preds = predict_many(model, head, split.test, pooling)
    rows = [(inst.date, inst.stock_id, p) for inst, p in zip(split.test, preds)]
    write_forecast_csv(rows, cfg.path("forecasts"))
    print(f"predict: {len(rows)} forecasts -> {cfg.path('forecasts')}")


def _joined_forecasts(cfg: RunConfig) -> list[Forecast]:
    rows = read_forecast_csv(_require(cfg.path("forecasts"), "predict"))
    entries = load_universe(_require(cfg.path("universe"), "gen-data"))
    actual = {(e.stock_id, e.date): e.forward_return for e in entries}
    out = []
    for d, sid, value in rows:
        key = (sid, d)
        if key not in actual:
            raise DataError(f"forecast for {sid} at {d} has no universe entry")
        out.append(Forecast(stock_id=sid, date=d, predicted=value,
                            actual=actual[key]))
    return out


def stage_evaluate(cfg: RunConfig) -> None:
    table = compute_decile_table(_joined_forecasts(cfg))
    write_decile_csv(table, cfg.path("decile_table"))
    spread = table[9].mean_return - table[0].mean_return
    print(f"evaluate: decile 9 mean {table[9].mean_return:.4f}, "
          f"decile 0 mean {table[0].mean_return:.4f}, spread {spread:.4f}")


def stage_backtest(cfg: RunConfig) -> None:
    vocab = Vocabulary.load(_require(cfg.path("vocab"), "gen-data"))
    model_forecasts = _joined_forecasts(cfg)
    mc = ModelConfig.from_dict(json.loads(
        _require(cfg.path("model_config"), "pretrain").read_text()))
    split, entries = _split(cfg, mc, vocab)
    lexicon = {str(k): float(v) for k, v in
               json.loads(_require(cfg.path("lexicon"), "gen-data").read_text()).items()}
    actual = {(e.stock_id, e.date): e.forward_return for e in entries}
    sentiment_forecasts = [
        Forecast(stock_id=inst.stock_id, date=inst.date,
                 predicted=sentiment_score(inst.ids, lexicon, vocab),
                 actual=actual[(inst.stock_id, inst.date)])
        for inst in split.test
    ]
    strategies = {"model": model_forecasts, "sentiment": sentiment_forecasts}
    for name, forecasts in strategies.items():
        for kind in PORTFOLIO_KINDS:
            stats = backtest(forecasts, PortfolioSpec(kind=kind))
            write_returns_csv(stats, cfg.out_dir / f"returns_{name}_{kind}.csv")
            write_curve_csv(stats, cfg.out_dir / f"curve_{name}_{kind}.csv")
            write_stats_json(stats, cfg.out_dir / f"stats_{name}_{kind}.json")
    forecast_dates = {f.date for f in model_forecasts}
    universe_by_date: dict[date, dict[str, float]] = {}
    for e in entries:
        if e.date in forecast_dates:
            universe_by_date.setdefault(e.date, {})[e.stock_id] = e.forward_return
    rows = compare_strategies(strategies, universe_by_date)
    write_comparison_csv(rows, cfg.path("comparison"))
    print("backtest: wrote returns/curve/stats per strategy and comparison.csv")


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def stage_report(cfg: RunConfig) -> None:
    decile_path = _require(cfg.path("decile_table"), "evaluate")
    comparison_path = _require(cfg.path("comparison"), "backtest")
    with decile_path.open() as fh:
        decile_rows = list(csv.reader(fh))
    with comparison_path.open() as fh:
        comparison_rows = list(csv.reader(fh))
    curve_files = sorted(p.name for p in cfg.out_dir.glob("curve_*.csv"))
    returns_files = sorted(p.name for p in cfg.out_dir.glob("returns_*.csv"))

    parts = [
        "# Newsflow return forecasting report",
        "",
        f"Seed: {cfg.seed}",
        "",
        "## Decile table (pooled across test dates)",
        "",
        _markdown_table(decile_rows[0], decile_rows[1:]),
        "",
        "## Strategy comparison",
        "",
        _markdown_table(comparison_rows[0], comparison_rows[1:]),
        "",
        "## Plot data",
        "",
    ]
    parts += [f"- `{name}`" for name in curve_files + returns_files]
    parts.append("")
    cfg.path("report").write_text("\n".join(parts))
    print(f"report: {cfg.path('report')}")


STAGES = {
    "gen-data": stage_gen_data,
    "pretrain": stage_pretrain,
    "finetune": stage_finetune,
    "predict": stage_predict,
    "evaluate": stage_evaluate,
    "backtest": stage_backtest,
    "report": stage_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage is 1
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def run_command(command: str, config_path, out=None, seed=None) -> int:
    """Run one pipeline stage; returns the process exit code."""
    try:
        cfg = RunConfig.load(config_path, out_override=out, seed_override=seed)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        STAGES[command](cfg)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 3
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    parser = _Parser(prog="newscast",
                     description="news-to-return forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
    args = parser.parse_args(argv)
    return run_command(args.command, args.config, out=args.out, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
