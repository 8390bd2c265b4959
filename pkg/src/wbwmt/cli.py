"""Command-line interface: ``wbwmt <subcommand> ...``.

Subcommands: map, dict, lm, translate, noise, postprocess, eval, sweep.
Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shlex
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

from . import __version__, ngram_lm, textpipe
from .crossmap import (AdversarialConfig, CrossmapConfig, EmptyDictionaryError, LinearMap,
                       adversarial_init, build_mutual_nn_dictionary, mean_mutual_csls,
                       precision_at_1, read_dictionary, read_map, refine, write_dictionary,
                       write_map)
from .decoder import DecoderConfig, Lexicon, Translator
from .embed import read_embeddings
from .noise import NoiseSpec, make_denoising_corpus, make_validation_pairs

log = logging.getLogger("wbwmt")


class InputError(Exception):
    """Bad user input: reported with exit code 2."""


# -- config -------------------------------------------------------------------

SECTIONS = ("crossmap", "adversarial", "decoder", "noise", "lm")


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(_existing(path), encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON: {e}") from None
    unknown = set(cfg) - set(SECTIONS) - {"seed", "threads"}
    if unknown:
        raise InputError(f"{path}: unknown config sections {sorted(unknown)}")
    return cfg


def _merge(cls, section: dict, overrides: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise InputError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    values = dict(section)
    values.update({k: v for k, v in overrides.items() if v is not None and k in names})
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise InputError(f"{cls.__name__}: {e}") from None


def crossmap_config(args, cfg) -> CrossmapConfig:
    adv = _merge(AdversarialConfig, cfg.get("adversarial", {}), {
        "epochs": getattr(args, "adv_epochs", None),
        "iterations_per_epoch": getattr(args, "adv_iters", None),
        "discriminator_hidden": getattr(args, "adv_hidden", None),
        "learning_rate": getattr(args, "adv_lr", None),
        "batch_size": getattr(args, "adv_batch", None),
        "seed": args.seed,
    })
    section = dict(cfg.get("crossmap", {}))
    section.pop("adversarial", None)
    out = _merge(CrossmapConfig, section, {
        "v_cross_train": getattr(args, "v_cross_train", None),
        "refinement_iters": getattr(args, "refine_iters", None),
        "csls_k": getattr(args, "csls_k", None),
        "mutual_metric": getattr(args, "mutual_metric", None),
    })
    out.adversarial = adv
    return out


def decoder_config(args, cfg) -> DecoderConfig:
    return _merge(DecoderConfig, cfg.get("decoder", {}), {
        "lambda_emb": args.lambda_emb,
        "lambda_lm": args.lambda_lm,
        "beam_size": args.beam,
        "candidates_per_word": args.candidates,
        "translate_vocab_limit": args.translate_vocab,
        "csls_k": args.csls_k,
        "lexical_similarity": args.lexical,
    })


def noise_spec(args, cfg) -> NoiseSpec:
    return _merge(NoiseSpec, cfg.get("noise", {}), {
        "p_ins": args.pins, "v_ins": args.vins, "p_del": args.pdel, "d_per": args.dper,
        "base_seed": args.seed,
    })


# -- io helpers ---------------------------------------------------------------

def _existing(path: str) -> str:
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    return path


def read_lines(path: str) -> list[str]:
    with open(_existing(path), encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def read_sentences(path: str) -> list[list[str]]:
    return [line.split() for line in read_lines(path)]


def write_sentences(path: str, sentences) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")


def load_table(path: str):
    return read_embeddings(_existing(path))


def load_map(path: str) -> LinearMap:
    with open(_existing(path), encoding="utf-8") as f:
        return read_map(line for line in f if not line.startswith("#"))


def load_lm(path: str) -> ngram_lm.NgramModel:
    with open(_existing(path), encoding="utf-8") as f:
        return ngram_lm.read_arpa(f)


class Report:
    """Collects diagnostics; prints them as text lines or one JSON object."""

    def __init__(self, as_json: bool):
        self.as_json = as_json
        self.data: dict = {}

    def add(self, key, value, text: str | None = None):
        self.data[key] = value
        if not self.as_json and text is not None:
            print(text)

    def finish(self):
        if self.as_json:
            print(json.dumps(self.data, sort_keys=True))


# -- subcommands --------------------------------------------------------------

def learn_mapping(src, tgt, init: str, ccfg: CrossmapConfig, report: Report | None = None) -> LinearMap:
    if init == "identity":
        w0 = LinearMap.identity(src.dim)
    elif init == "adversarial":
        history: list = []
        w0 = adversarial_init(src, tgt, ccfg, history)
        if report:
            report.add("adversarial", history)
    else:
        w0 = load_map(init)
    if w0.dim != src.dim or src.dim != tgt.dim:
        raise InputError("embedding and mapping dimensions disagree")
    history = []
    w = refine(src, tgt, w0, ccfg, history)
    if report:
        report.add("refinement", history)
        for h in history:
            if not report.as_json:
                print(f"iteration {h['iteration']}\tpairs {h['dictionary_size']}\tmean_csls {h['mean_csls']:.6f}")
    return w


def cmd_map(args, cfg, report):
    ccfg = crossmap_config(args, cfg)
    src, tgt = load_table(args.src), load_table(args.tgt)
    w = learn_mapping(src, tgt, args.init, ccfg, report)
    crit = mean_mutual_csls(src, tgt, w, ccfg.v_cross_train, min(ccfg.csls_k, len(src), len(tgt)))
    report.add("mean_csls", crit, f"final mean_csls {crit:.6f}")
    if args.eval_dict:
        with open(_existing(args.eval_dict), encoding="utf-8") as f:
            gold = read_dictionary(f, src, tgt)
        p = precision_at_1(src, tgt, w, gold, ccfg.csls_k)
        report.add("precision_at_1", p, f"precision@1 {p:.4f}")
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(f"# wbwmt map init={args.init} seed={args.seed}\n")
        write_map(w, f)


def cmd_dict(args, cfg, report):
    ccfg = crossmap_config(args, cfg)
    src, tgt = load_table(args.src), load_table(args.tgt)
    d = build_mutual_nn_dictionary(src, tgt, load_map(args.map), ccfg)
    with open(args.output, "w", encoding="utf-8") as f:
        write_dictionary(d, src, tgt, f)
    report.add("pairs", len(d), f"pairs {len(d)}")


def cmd_lm(args, cfg, report):
    if args.action == "train":
        order = args.order or cfg.get("lm", {}).get("order", 5)
        corpus = read_sentences(args.corpus)
        if not corpus:
            raise InputError(f"{args.corpus}: empty corpus")
        model = ngram_lm.train(corpus, order)
        with open(args.output, "w", encoding="utf-8") as f:
            ngram_lm.write_arpa(model, f)
        report.add("ngrams", [len(t) for t in model.logprob],
                   "ngrams " + " ".join(str(len(t)) for t in model.logprob))
    else:
        model = load_lm(args.model)
        corpus = read_sentences(args.corpus)
        if not corpus:
            raise InputError(f"{args.corpus}: empty corpus")
        ppl = ngram_lm.perplexity(model, corpus)
        report.add("perplexity", round(ppl, 4), f"{ppl:.4f}")


def translate_corpus(translator: Translator, sentences, threads: int = 1):
    """Translate masked sentences; returns (tokens, score) per sentence, input order kept."""
    def one(tokens):
        mask = textpipe.mask_numbers(tokens)
        hyp = translator.translate(list(mask.masked_tokens))
        out, _ = textpipe.unmask_numbers(hyp.target_words, mask)
        return out, hyp.accumulated_score

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, sentences))
    return [one(s) for s in sentences]


def build_translator(args, cfg, linmap=None, src=None, tgt=None, lm=None) -> Translator:
    dcfg = decoder_config(args, cfg)
    src = src or load_table(args.src)
    tgt = tgt or load_table(args.tgt)
    linmap = linmap or load_map(args.map)
    lm = lm or load_lm(args.lm)
    return Translator(Lexicon(src, tgt, linmap, dcfg.csls_k), lm, dcfg)


def cmd_translate(args, cfg, report):
    translator = build_translator(args, cfg)
    sentences = read_sentences(args.input)
    results = translate_corpus(translator, sentences, args.threads)
    write_sentences(args.output, (r[0] for r in results))
    if args.scores:
        with open(args.scores, "w", encoding="utf-8") as f:
            for i, (_, s) in enumerate(results):
                f.write(f"{i}\t{s!r}\n")
    report.add("sentences", len(results), f"translated {len(results)} sentences")


def _noise_vocab(args, corpus) -> list[str]:
    if args.vocab:
        with open(_existing(args.vocab), encoding="utf-8") as f:
            return textpipe.Vocabulary.read(f).words
    return textpipe.build_vocab(corpus).words


def write_pairs(pairs, noisy_path=None, clean_path=None, tsv_path=None) -> int:
    n = 0
    if tsv_path:
        with open(tsv_path, "w", encoding="utf-8") as f:
            for p in pairs:
                f.write(" ".join(p.noisy) + "\t" + " ".join(p.clean) + "\n")
                n += 1
        return n
    with open(noisy_path, "w", encoding="utf-8") as fn, open(clean_path, "w", encoding="utf-8") as fc:
        for p in pairs:
            fn.write(" ".join(p.noisy) + "\n")
            fc.write(" ".join(p.clean) + "\n")
            n += 1
    return n


def cmd_noise(args, cfg, report):
    corpus = read_sentences(args.input)
    if not args.tsv and not (args.noisy and args.clean):
        raise InputError("give either --tsv or both --noisy and --clean")
    if args.validation:
        pairs = make_validation_pairs(corpus)
    else:
        spec = noise_spec(args, cfg)
        vocab = _noise_vocab(args, corpus)
        if spec.p_ins > 0 and spec.v_ins > len(vocab):
            raise InputError(f"v_ins={spec.v_ins} exceeds the vocabulary size {len(vocab)}")
        if not corpus:
            raise InputError(f"{args.input}: empty corpus")
        pairs = make_denoising_corpus(corpus, spec, args.epochs, args.batch_size, vocab)
        report.add("noise", dataclasses.asdict(spec))
    n = write_pairs(pairs, args.noisy, args.clean, args.tsv)
    report.add("pairs", n, f"pairs {n} seed {args.seed}")


def cmd_postprocess(args, cfg, report):
    denoised = read_sentences(args.denoised)
    noisy = read_sentences(args.noisy)
    if len(denoised) != len(noisy):
        raise InputError(f"line count mismatch: {args.denoised} has {len(denoised)}, "
                         f"{args.noisy} has {len(noisy)}")
    out = [textpipe.replace_unknowns(d, n) for d, n in zip(denoised, noisy)]
    write_sentences(args.output, out)
    report.add("sentences", len(out), f"postprocessed {len(out)} sentences")


def eval_files(hyp_path: str, ref_path: str) -> float:
    hyp, ref = read_lines(hyp_path), read_lines(ref_path)
    if len(hyp) != len(ref):
        raise InputError(f"line count mismatch: {len(hyp)} hypotheses, {len(ref)} references")
    if not hyp:
        raise InputError("empty corpus")
    return textpipe.bleu(hyp, ref)


def cmd_eval(args, cfg, report):
    score = eval_files(args.hyp, args.ref)
    report.add("bleu", round(score, 1), f"{score:.1f}")


def parse_grid(items, allowed: dict) -> list[dict]:
    """``["dper=2,3,5", "pdel=0.1"]`` -> cartesian product as a list of dicts."""
    axes: dict[str, list] = {}
    for item in items or []:
        name, _, values = item.partition("=")
        if name not in allowed or not values:
            raise InputError(f"bad grid axis {item!r}; expected one of {sorted(allowed)}")
        axes[name] = [allowed[name](v) for v in values.split(",")]
    points = [{}]
    for name, values in axes.items():
        points = [dict(p, **{name: v}) for p in points for v in values]
    return points


def _run_denoiser(template: str, files: dict) -> None:
    cmd = [part.format(**files) for part in shlex.split(template)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"denoiser command failed ({proc.returncode}): {proc.stderr.strip()}")


def sweep_noise(args, cfg, report) -> tuple[list[str], list[list]]:
    corpus = read_sentences(args.corpus)
    if not corpus:
        raise InputError(f"{args.corpus}: empty corpus")
    vocab = _noise_vocab(args, corpus)
    base = noise_spec(args, cfg)
    grid = parse_grid(args.grid, {"dper": int, "pdel": float, "vins": int, "pins": float})
    header = ["d_per", "p_del", "v_ins", "p_ins", "bleu", "noisy_bleu"]
    rows = []
    for point in grid:
        t0 = time.perf_counter()
        spec = dataclasses.replace(base, d_per=point.get("dper", base.d_per),
                                   p_del=point.get("pdel", base.p_del),
                                   v_ins=point.get("vins", base.v_ins),
                                   p_ins=point.get("pins", base.p_ins))
        pairs = list(make_denoising_corpus(corpus, spec, args.epochs, args.batch_size, vocab))
        first = pairs[:len(corpus)]
        noisy_bleu = textpipe.bleu([p.noisy for p in first], [p.clean for p in first])
        with tempfile.TemporaryDirectory() as tmp:
            files = {k: os.path.join(tmp, k) for k in ("train_noisy", "train_clean", "output")}
            files["input"] = args.hyp
            if args.denoiser_cmd:
                write_pairs(pairs, files["train_noisy"], files["train_clean"])
                _run_denoiser(args.denoiser_cmd, files)
                denoised = read_sentences(files["output"])
            else:
                denoised = read_sentences(args.hyp)
            hyp = read_sentences(args.hyp)
            if len(denoised) != len(hyp):
                raise RuntimeError("denoiser output is not line-aligned with its input")
            final = [textpipe.replace_unknowns(d, n) for d, n in zip(denoised, hyp)]
        ref = read_lines(args.ref)
        if len(ref) != len(final):
            raise InputError("hypothesis and reference line counts differ")
        score = textpipe.bleu(final, ref)
        rows.append([spec.d_per, spec.p_del, spec.v_ins, spec.p_ins, f"{score:.1f}", f"{noisy_bleu:.1f}"])
        _runtime(report, point, time.perf_counter() - t0)
    return header, rows


def sweep_vocab(args, cfg, report) -> tuple[list[str], list[list]]:
    src, tgt = load_table(args.src), load_table(args.tgt)
    lm = load_lm(args.lm)
    sentences = read_sentences(args.input)
    ref = read_lines(args.ref)
    if len(ref) != len(sentences):
        raise InputError("input and reference line counts differ")
    base = crossmap_config(args, cfg)
    grid = parse_grid(args.grid, {"vcross": int})
    header = ["v_cross_train", "dictionary_size", "bleu"]
    rows = []
    for point in grid:
        t0 = time.perf_counter()
        ccfg = dataclasses.replace(base, v_cross_train=point.get("vcross", base.v_cross_train))
        w = learn_mapping(src, tgt, args.init, ccfg)
        size = len(build_mutual_nn_dictionary(src, tgt, w, ccfg))
        translator = build_translator(args, cfg, linmap=w, src=src, tgt=tgt, lm=lm)
        out = [r[0] for r in translate_corpus(translator, sentences, args.threads)]
        score = textpipe.bleu(out, ref)
        rows.append([ccfg.v_cross_train, size, f"{score:.1f}"])
        _runtime(report, point, time.perf_counter() - t0)
    return header, rows


def _runtime(report: Report, point: dict, seconds: float) -> None:
    # timings vary run to run, so they never enter the TSV
    report.data.setdefault("runtime", []).append({"point": point, "seconds": round(seconds, 3)})
    log.info("grid point %s: %.2fs", point, seconds)
    if not report.as_json:
        print(f"{json.dumps(point, sort_keys=True)}\t{seconds:.2f}s", file=sys.stderr)


def cmd_sweep(args, cfg, report):
    header, rows = (sweep_noise if args.kind == "noise" else sweep_vocab)(args, cfg, report)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(f"# wbwmt sweep {args.kind} seed={args.seed}\n")
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")
    report.add("rows", [dict(zip(header, r)) for r in rows], f"wrote {len(rows)} rows to {args.output}")


# -- parser -------------------------------------------------------------------

def _add_crossmap_flags(p):
    p.add_argument("--v-cross-train", type=int, help="vocabulary size for dictionary induction")
    p.add_argument("--csls-k", type=int, help="CSLS neighborhood size")
    p.add_argument("--refine-iters", type=int, help="number of refinement iterations")
    p.add_argument("--mutual-metric", choices=["csls", "cosine"])


def _add_adversarial_flags(p):
    p.add_argument("--init", default="adversarial",
                   help="initial mapping: adversarial, identity, or a mapping file")
    p.add_argument("--adv-epochs", type=int)
    p.add_argument("--adv-iters", type=int, help="iterations per adversarial epoch")
    p.add_argument("--adv-hidden", type=int)
    p.add_argument("--adv-lr", type=float)
    p.add_argument("--adv-batch", type=int)


def _add_decoder_flags(p):
    p.add_argument("--lambda-emb", type=float)
    p.add_argument("--lambda-lm", type=float)
    p.add_argument("--beam", type=int)
    p.add_argument("--candidates", type=int, help="target candidates per source word")
    p.add_argument("--translate-vocab", type=int, help="only the top N source words are translated")
    p.add_argument("--lexical", choices=["cosine", "csls"], help="similarity used inside the lexical score")


def _add_noise_flags(p):
    p.add_argument("--dper", type=int, help="maximum permutation distance (default 3)")
    p.add_argument("--pdel", type=float, help="deletion probability (default 0.1)")
    p.add_argument("--pins", type=float, help="insertion probability (default 0.1)")
    p.add_argument("--vins", type=int, help="insert from this many most frequent words (default 50)")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--vocab", help="frequency-ranked vocabulary file (token<TAB>count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wbwmt", description="unsupervised word-by-word translation toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON config with per-module sections")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--json", action="store_true", help="print diagnostics as JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="learn a cross-lingual mapping")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--eval-dict", help="gold dictionary TSV for reporting precision@1")
    _add_crossmap_flags(p)
    _add_adversarial_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("dict", help="induce a mutual-nearest-neighbor dictionary")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_crossmap_flags(p)
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("lm", help="train or score an n-gram language model")
    lm_sub = p.add_subparsers(dest="action", required=True)
    t = lm_sub.add_parser("train")
    t.add_argument("corpus")
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--order", type=int)
    s = lm_sub.add_parser("score")
    s.add_argument("corpus")
    s.add_argument("--model", required=True)
    p.set_defaults(func=cmd_lm)

    p = sub.add_parser("translate", help="word-by-word translation with LM beam search")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--scores", help="write sentence_index<TAB>score lines here")
    p.add_argument("--csls-k", type=int)
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("noise", help="generate a denoising training corpus")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--noisy", help="output file for the noisy side")
    p.add_argument("--clean", help="output file for the clean side")
    p.add_argument("--tsv", help="write noisy<TAB>clean pairs to one file instead")
    p.add_argument("--validation", action="store_true", help="clean-clean pairs")
    _add_noise_flags(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("postprocess", help="replace <unk> in denoiser output")
    p.add_argument("--denoised", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("eval", help="corpus BLEU")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="ablation sweeps over noise or vocabulary parameters")
    p.add_argument("kind", choices=["noise", "vocab"])
    p.add_argument("--grid", nargs="+", help="axes like dper=2,3,5 pdel=0.1 vins=50 or vcross=20,50")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ref", required=True)
    # noise sweep
    p.add_argument("--corpus", help="clean target corpus for noise generation")
    p.add_argument("--hyp", help="word-by-word translations to denoise")
    p.add_argument("--denoiser-cmd",
                   help="command template run per grid point; placeholders {train_noisy} "
                        "{train_clean} {input} {output}")
    _add_noise_flags(p)
    # vocab sweep
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--lm")
    p.add_argument("-i", "--input")
    _add_crossmap_flags(p)
    _add_adversarial_flags(p)
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _check_sweep_args(args):
    need = ("corpus", "hyp") if args.kind == "noise" else ("src", "tgt", "lm", "input")
    missing = [n for n in need if getattr(args, n) is None]
    if missing:
        raise InputError(f"sweep {args.kind} needs " + ", ".join("--" + m for m in missing))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    report = Report(args.json)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if args.threads is None:
            args.threads = int(cfg.get("threads", 1))
        if args.command == "sweep":
            _check_sweep_args(args)
        report.add("seed", args.seed)
        args.func(args, cfg, report)
    except (InputError, FileNotFoundError, IsADirectoryError, ValueError, EmptyDictionaryError) as e:
        print(f"wbwmt {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"wbwmt {args.command}: internal error: {e!r}", file=sys.stderr)
        return 1
    report.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
