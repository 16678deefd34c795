"""Command-line pipeline: synth, build-vocab, pretrain, train-adv, generate, evaluate.

Every command takes --config/--seed/--out; the effective configuration is
echoed into the output directory, and identical inputs plus an identical seed
reproduce outputs byte-for-byte. Failures print a single machine-parsable
line `error: <category>: <message>` to stderr and exit nonzero.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click

from .config import ConfigError, RunConfig
from .corpus import (CorpusFormatError, Vocab, build_vocab, load_corpus,
                     save_corpus, split_records, synth_generate)
from .discriminator import Discriminator, DiscriminatorConfig
from .generator import DimMismatchError, Generator, GeneratorConfig
from .params import CheckpointError, load_checkpoint, save_checkpoint
from .rouge import corpus_rouge
from .trainer import (adversarial_train, evaluate_rouge, pretrain_mle,
                      record_inputs)


class CLIError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _fail(category, message):
    raise CLIError(category, message)


def _command(fn):
    """Map failures to `error: <category>: <message>` on stderr, exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CLIError as exc:
            click.echo(f"error: {exc.category}: {exc}", err=True)
            sys.exit(1)
        except FileNotFoundError as exc:
            click.echo(f"error: missing-file: {exc}", err=True)
            sys.exit(1)
        except ConfigError as exc:
            click.echo(f"error: malformed-config: {exc}", err=True)
            sys.exit(1)
        except (CorpusFormatError, CheckpointError) as exc:
            click.echo(f"error: parse-error: {exc}", err=True)
            sys.exit(1)
        except DimMismatchError as exc:
            click.echo(f"error: dim-mismatch: {exc}", err=True)
            sys.exit(1)
        except OSError as exc:
            click.echo(f"error: io-error: {exc}", err=True)
            sys.exit(1)
        except ValueError as exc:
            click.echo(f"error: invalid-input: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON run config; flags win over the file.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the training and synthesis seed.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), required=True,
                      help="Output directory (created if missing).")(fn)
    return fn


def _load_config(config_path, seed) -> RunConfig:
    cfg = RunConfig.load(config_path) if config_path else RunConfig()
    cfg.override_seed(seed)
    cfg.validate()
    return cfg


def _prepare_out(out_dir, cfg: RunConfig):
    os.makedirs(out_dir, exist_ok=True)
    cfg.dump(os.path.join(out_dir, "effective_config.json"))


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row))
            fh.write("\n")


def _load_vocab(path) -> Vocab:
    return Vocab.load(path)


def _generator_config(cfg: RunConfig, vocab_size: int) -> GeneratorConfig:
    return GeneratorConfig(
        vocab_size=vocab_size,
        embed_dim=cfg.embed_dim,
        hidden_dim=cfg.hidden_dim,
        image_dim=cfg.image_dim,
        max_len=cfg.train.max_len,
        use_attrs=cfg.use_attrs,
        use_image=cfg.use_image,
    )


@click.group()
def main():
    """Short-title generation: synthesis, training and evaluation."""


@main.command()
@_common_options
@click.option("--n-records", type=int, default=None, help="Override synth.n_records.")
@_command
def synth(config_path, seed, out_dir, n_records):
    """Generate the synthetic corpus and write train/valid/test splits."""
    cfg = _load_config(config_path, seed)
    if n_records is not None:
        import dataclasses

        cfg.synth = dataclasses.replace(cfg.synth, n_records=n_records)
        cfg.validate()
    _prepare_out(out_dir, cfg)
    records = synth_generate(cfg.synth)
    train, valid, test = split_records(records, cfg.split)
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        save_corpus(part, os.path.join(out_dir, f"{name}.jsonl"))
    click.echo(f"train={len(train)} valid={len(valid)} test={len(test)}")
    if not valid or not test:
        click.echo("warning: empty valid or test split (too few records)", err=True)


@main.command("build-vocab")
@_common_options
@click.option("--corpus", "corpus_paths", type=click.Path(), multiple=True,
              required=True, help="Corpus file(s) to count tokens from.")
@click.option("--min-freq", type=int, default=1, show_default=True)
@_command
def build_vocab_cmd(config_path, seed, out_dir, corpus_paths, min_freq):
    """Build the vocabulary from one or more corpus files."""
    cfg = _load_config(config_path, seed)
    _prepare_out(out_dir, cfg)
    records = []
    for path in corpus_paths:
        records.extend(load_corpus(path))
    vocab = build_vocab(records, min_freq)
    vocab.save(os.path.join(out_dir, "vocab.json"))
    click.echo(f"vocab_size={len(vocab)}")


@main.command()
@_common_options
@click.option("--train", "train_path", type=click.Path(), required=True)
@click.option("--valid", "valid_path", type=click.Path(), default=None)
@click.option("--vocab", "vocab_path", type=click.Path(), required=True)
@_command
def pretrain(config_path, seed, out_dir, train_path, valid_path, vocab_path):
    """MLE-pretrain the generator; writes a checkpoint and a loss log."""
    cfg = _load_config(config_path, seed)
    _prepare_out(out_dir, cfg)
    vocab = _load_vocab(vocab_path)
    train_records = load_corpus(train_path)
    if not train_records:
        _fail("invalid-input", f"{train_path}: training corpus is empty")
    gen = Generator(_generator_config(cfg, len(vocab)), seed=cfg.train.seed)
    log = pretrain_mle(gen, train_records, vocab, cfg.train)
    _write_jsonl(os.path.join(out_dir, "pretrain_loss.jsonl"), log)
    save_checkpoint(os.path.join(out_dir, "pretrain.ckpt"), {"gen": gen.params},
                    cfg.train.seed, cfg.train.pretrain_epochs)
    click.echo(f"pretrain_nll_first={log[0]['nll']:.4f} "
               f"pretrain_nll_last={log[-1]['nll']:.4f}")
    if valid_path:
        valid_records = load_corpus(valid_path)
        if valid_records:
            scores = evaluate_rouge(gen, valid_records, vocab, cfg.train.max_len)
            click.echo(f"valid_rouge1_recall={scores['rouge1'].recall:.4f}")


@main.command("train-adv")
@_common_options
@click.option("--train", "train_path", type=click.Path(), required=True)
@click.option("--valid", "valid_path", type=click.Path(), default=None)
@click.option("--vocab", "vocab_path", type=click.Path(), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True,
              help="Pretrained checkpoint to start from.")
@_command
def train_adv(config_path, seed, out_dir, train_path, valid_path, vocab_path,
              checkpoint_path):
    """Adversarial phase; writes per-round checkpoints and a metrics log."""
    cfg = _load_config(config_path, seed)
    _prepare_out(out_dir, cfg)
    vocab = _load_vocab(vocab_path)
    train_records = load_corpus(train_path)
    if not train_records:
        _fail("invalid-input", f"{train_path}: training corpus is empty")
    valid_records = load_corpus(valid_path) if valid_path else []
    groups, _, _ = load_checkpoint(checkpoint_path)
    if "gen" not in groups:
        _fail("parse-error", f"{checkpoint_path}: no generator parameter group")
    gen = Generator(_generator_config(cfg, len(vocab)), params=groups["gen"])
    disc_cfg = DiscriminatorConfig(vocab_size=len(vocab), embed_dim=cfg.embed_dim,
                                   hidden_dim=cfg.hidden_dim)
    if "disc" in groups:
        disc = Discriminator(disc_cfg, params=groups["disc"])
    else:
        disc = Discriminator(disc_cfg, seed=cfg.train.seed)
    metrics = adversarial_train(gen, disc, train_records, valid_records, vocab,
                                cfg.train, checkpoint_dir=out_dir)
    _write_jsonl(os.path.join(out_dir, "metrics.jsonl"), metrics)
    last = metrics[-1] if metrics else {}
    click.echo(f"rounds={len(metrics)} "
               f"final_reward={last.get('mean_reward', float('nan')):.4f}")


@main.command()
@_common_options
@click.option("--input", "input_path", type=click.Path(), required=True,
              help="Corpus split to decode.")
@click.option("--vocab", "vocab_path", type=click.Path(), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(["greedy", "sample"]), default="greedy",
              show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@_command
def generate(config_path, seed, out_dir, input_path, vocab_path, checkpoint_path,
             mode, temperature):
    """Decode short titles for a corpus split, one per line."""
    cfg = _load_config(config_path, seed)
    _prepare_out(out_dir, cfg)
    vocab = _load_vocab(vocab_path)
    records = load_corpus(input_path)
    groups, _, _ = load_checkpoint(checkpoint_path)
    if "gen" not in groups:
        _fail("parse-error", f"{checkpoint_path}: no generator parameter group")
    gen = Generator(_generator_config(cfg, len(vocab)), params=groups["gen"])
    out_path = os.path.join(out_dir, "generated.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        for idx, rec in enumerate(records):
            ids = gen.generate(record_inputs(vocab, rec), mode=mode,
                               temperature=temperature,
                               seed=cfg.train.seed + idx,
                               max_len=cfg.train.max_len)
            fh.write(" ".join(vocab.decode(ids)))
            fh.write("\n")
    click.echo(f"generated={len(records)} -> {out_path}")


def _read_titles(path) -> list:
    """Title-per-line text file, or a .jsonl corpus (gold short titles)."""
    if str(path).endswith(".jsonl"):
        return [rec.short_title for rec in load_corpus(path)]
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split() for line in fh]


@main.command()
@_common_options
@click.option("--generated", "generated_path", type=click.Path(), required=True)
@click.option("--references", "references_path", type=click.Path(), required=True)
@_command
def evaluate(config_path, seed, out_dir, generated_path, references_path):
    """ROUGE-1/2/L of a generation file against references."""
    cfg = _load_config(config_path, seed)
    _prepare_out(out_dir, cfg)
    candidates = _read_titles(generated_path)
    references = _read_titles(references_path)
    if len(candidates) != len(references):
        _fail("invalid-input",
              f"{len(candidates)} generated titles vs {len(references)} references")
    if not candidates:
        _fail("invalid-input", "no pairs to evaluate")
    scores = corpus_rouge(zip(candidates, references))
    report = {"pairs": len(candidates)}
    for key in ("rouge1", "rouge2", "rougeL"):
        s = scores[key]
        report[key] = {"recall": s.recall, "precision": s.precision, "f1": s.f1}
        click.echo(f"{key} recall={s.recall:.4f} precision={s.precision:.4f} "
                   f"f1={s.f1:.4f}")
    with open(os.path.join(out_dir, "rouge_report.json"), "w",
              encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
