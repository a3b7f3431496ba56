"""Command line pipeline: gen, train, encode, index, query, eval, curves.

Options come from three layers, later ones winning: built-in defaults, a
``key = value`` file given by ``--config``, and command line flags.  Keys in
the config file use the flag names with dashes or underscores.  Every failure
ends the process with a single ``error code=... exit=... message=...`` line on
stderr and a nonzero status (2 config, 3 data/format, 4 numerical).
"""

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import codec, data as D, loss as L, metrics as M, trainer as T
from ._io import atomic_write
from .errors import ConfigError, DataError, DCWHError
from .index import build_index
from .net import load_net, save_net

# key: (type, default); None-typed defaults are resolved per command
OPTIONS = {
    "data": (str, "data.dcw1"),
    "checkpoint": (str, "net.dcwn"),
    "centers": (str, "centers.dcwc"),
    "log": (str, "trainlog.csv"),
    "query_codes": (str, "query.dcwb"),
    "db_codes": (str, "database.dcwb"),
    "codes": (str, "codes.dcwb"),
    "report": (str, "report.json"),
    "curve": (str, "precision.csv"),
    # gen
    "classes": (int, 10),
    "per_class": (int, 120),
    "dim": (int, 16),
    "spread": (float, 1.0),
    "combos": (str, None),
    # split
    "query_per_class": (int, None),
    "query_count": (int, None),
    "train_per_class": (int, None),
    "train_count": (int, None),
    "group2": (bool, False),
    # training
    "bits": (int, 16),
    "sigma_sq": (float, None),
    "alpha": (float, 1.1),
    "eta1": (float, 10.0),
    "eta2": (float, 0.01),
    "lr": (float, 0.001),
    "weight_decay": (float, 0.0005),
    "batch": (int, 64),
    "epochs_stage1": (int, 300),
    "epochs_stage2": (int, 100),
    "center_mode": (str, "periodic"),
    "center_update_period": (int, None),
    "stage2_centers": (str, "continuous"),
    "hidden": (str, "64,64"),
    "seed": (int, 0),
    "threads": (int, 1),
    # retrieval
    "k": (int, 100),
    "query_id": (int, None),
    "precision_ks": (str, "1,5,10,20,50,100"),
    "ndcg_ks": (str, "100"),
    "subset": (str, "split"),
}

COMMAND_OPTIONS = {
    "gen": ["data", "classes", "per_class", "dim", "spread", "combos", "seed"],
    "train": ["data", "checkpoint", "centers", "log", "query_codes", "db_codes",
              "query_per_class", "query_count", "train_per_class", "train_count", "group2",
              "bits", "sigma_sq", "alpha", "eta1", "eta2", "lr", "weight_decay", "batch",
              "epochs_stage1", "epochs_stage2", "center_mode", "center_update_period",
              "stage2_centers", "hidden", "seed", "threads"],
    "encode": ["data", "checkpoint", "query_codes", "db_codes", "codes", "subset",
               "query_per_class", "query_count", "train_per_class", "train_count",
               "group2", "seed", "threads"],
    "index": ["db_codes"],
    "query": ["db_codes", "query_codes", "query_id", "k"],
    "eval": ["data", "query_codes", "db_codes", "report", "k", "precision_ks", "ndcg_ks",
             "threads"],
    "curves": ["data", "query_codes", "db_codes", "curve", "precision_ks", "threads"],
}

CHOICES = {
    "center_mode": T.CENTER_MODES,
    "stage2_centers": T.STAGE2_CENTERS,
    "subset": ("split", "all"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(key, raw):
    kind = OPTIONS[key][0]
    try:
        value = _parse_bool(raw) if kind is bool else kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"{key}: {value!r} not in {CHOICES[key]}")
    return value


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def _int_list(text, what):
    try:
        out = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from None
    if any(v <= 0 for v in out):
        raise ConfigError(f"{what}: values must be positive")
    return out


def build_parser():
    parser = _Parser(prog="dcwh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, keys in COMMAND_OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for key in keys:
            flag = "--" + key.replace("_", "-")
            if OPTIONS[key][0] is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, dest=key, default=None,
                               choices=CHOICES.get(key))
    return parser


def resolve(args):
    """Merge defaults, config file and flags for the chosen command."""
    keys = COMMAND_OPTIONS[args.command]
    values = {k: OPTIONS[k][1] for k in keys}
    if args.config:
        for k, v in read_config_file(args.config).items():
            if k in values:
                values[k] = v
    for k in keys:
        raw = getattr(args, k)
        if raw is not None:
            values[k] = raw if OPTIONS[k][0] is bool else _coerce(k, raw)
    if values.get("threads") is not None and values["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return values


def _split_spec(v, data):
    spec = dict(query_per_class=v["query_per_class"], query_count=v["query_count"],
                train_per_class=v["train_per_class"], train_count=v["train_count"],
                group2=bool(v["group2"]), seed=v["seed"])
    if spec["query_per_class"] is None and spec["query_count"] is None:
        if data.multilabel:
            spec["query_count"] = max(1, len(data) // 10)
        else:
            spec["query_per_class"] = max(1, int(data.class_sizes().min()) // 6)
    return D.SplitSpec(**spec)


def _train_config(v, data):
    loss_cfg = L.LossConfig(
        code_length=v["bits"], class_count=data.class_count, sigma_sq=v["sigma_sq"],
        alpha=v["alpha"], eta1=v["eta1"], eta2=v["eta2"], multilabel=data.multilabel)
    return T.TrainConfig(
        loss=loss_cfg, lr=v["lr"], weight_decay=v["weight_decay"], batch_size=v["batch"],
        center_update_period=v["center_update_period"], stage1_epochs=v["epochs_stage1"],
        stage2_epochs=v["epochs_stage2"], center_mode=v["center_mode"],
        stage2_centers=v["stage2_centers"], hidden=_int_list(v["hidden"], "hidden"),
        seed=v["seed"])


def _need(path, what):
    if not os.path.exists(path):
        raise DataError(f"{what} file not found: {path}")
    return path


def cmd_gen(v, out):
    if v["combos"]:
        data = D.gen_multilabel_blobs(v["classes"], v["per_class"], v["dim"],
                                      _combos_zero_based(v["combos"]), v["spread"], v["seed"])
    else:
        data = D.gen_blobs(v["classes"], v["per_class"], v["dim"], v["spread"], v["seed"])
    D.write_dataset(v["data"], data)
    print(f"wrote {v['data']} samples={len(data)} dim={data.dim} classes={data.class_count}",
          file=out)


def _combos_zero_based(text):
    combos = []
    for group in text.split(";"):
        try:
            ids = [int(t) for t in group.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"combos: cannot parse {group!r}") from None
        if not ids:
            raise ConfigError("combos: empty label combination")
        combos.append(ids)
    return combos


def _write_split_codes(net, data, spec, v):
    _, query, database = D.split_indices(data, spec)
    codec.save_codes(v["query_codes"], codec.encode(net, data.features[query]), query)
    codec.save_codes(v["db_codes"], codec.encode(net, data.features[database]), database)
    return query, database


def cmd_train(v, out):
    data = D.read_dataset(_need(v["data"], "dataset"))
    spec = _split_spec(v, data)
    cfg = _train_config(v, data)
    train_rows, _, _ = D.split_indices(data, spec)
    train = data.subset(train_rows)
    result = T.train_full(train, cfg)
    save_net(v["checkpoint"], result.net)
    L.save_centers(v["centers"], result.centers)
    atomic_write(v["log"], result.log.to_csv().encode())
    query, database = _write_split_codes(result.net, data, spec, v)
    meta = {
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": {k: v[k] for k in COMMAND_OPTIONS["train"]},
        "sigma_sq": cfg.loss.sigma_sq,
        "train_samples": int(train_rows.size),
    }
    atomic_write(v["checkpoint"] + ".meta.json", (json.dumps(meta, indent=2) + "\n").encode())
    last = result.log.iterations[-1] if result.log.iterations else None
    print(f"trained bits={cfg.loss.code_length} sigma_sq={cfg.loss.sigma_sq} "
          f"iterations={len(result.log.iterations)} "
          f"final_loss={last[2] if last else float('nan'):.6g} "
          f"queries={query.size} database={database.size}", file=out)


def cmd_encode(v, out):
    data = D.read_dataset(_need(v["data"], "dataset"))
    net = load_net(_need(v["checkpoint"], "checkpoint"))
    if v["subset"] == "all":
        ids = np.arange(len(data))
        codec.save_codes(v["codes"], codec.encode(net, data.features), ids)
        print(f"wrote {v['codes']} count={ids.size} bits={net.output_dim}", file=out)
        return
    query, database = _write_split_codes(net, data, _split_spec(v, data), v)
    print(f"wrote {v['query_codes']} count={query.size} and {v['db_codes']} "
          f"count={database.size} bits={net.output_dim}", file=out)


def cmd_index(v, out):
    codes, ids = codec.load_codes(_need(v["db_codes"], "database code"))
    index = build_index(codes, ids)
    print(f"index count={len(index)} bits={index.bits} stride_words={index.stride}", file=out)


def cmd_query(v, out):
    codes, ids = codec.load_codes(_need(v["db_codes"], "database code"))
    index = build_index(codes, ids)
    if v["query_id"] is not None:
        hit = np.flatnonzero(ids == v["query_id"])
        if not hit.size:
            raise DataError(f"query id {v['query_id']} not in database")
        queries, qids = codes[hit], ids[hit]
    else:
        queries, qids = codec.load_codes(_need(v["query_codes"], "query code"))
    if len(queries) == 0:
        raise DataError("no query codes")
    if v["k"] < 1:
        raise ConfigError("k must be >= 1")
    for qid, q in zip(qids, queries):
        if len(queries) > 1:
            print(f"# query {qid}", file=out)
        for hit_id, dist in index.query_topk(q, v["k"]):
            print(f"{hit_id} {dist}", file=out)


def _eval_inputs(v):
    data = D.read_dataset(_need(v["data"], "dataset"))
    q_codes, q_ids = codec.load_codes(_need(v["query_codes"], "query code"))
    db_codes, db_ids = codec.load_codes(_need(v["db_codes"], "database code"))
    if len(q_codes) == 0:
        raise DataError("empty query set")
    for ids in (q_ids, db_ids):
        if ids.size and ids.max() >= len(data):
            raise DataError(f"sample id {ids.max()} beyond dataset size {len(data)}")
    index = build_index(db_codes, db_ids)
    judge = M.RelevanceJudge(data.labels[q_ids], data.labels[index.ids])
    return q_codes, index, judge


def cmd_eval(v, out):
    queries, index, judge = _eval_inputs(v)
    if v["k"] < 1:
        raise ConfigError("k must be >= 1")
    report = M.evaluate(queries, index, judge, v["k"],
                        precision_ks=_int_list(v["precision_ks"], "precision-ks"),
                        ndcg_ks=_int_list(v["ndcg_ks"], "ndcg-ks"))
    atomic_write(v["report"], report.to_json().encode())
    print(f"map@{v['k']}={report.map:.6f} queries={report.queries} bits={report.bits}", file=out)


def cmd_curves(v, out):
    queries, index, judge = _eval_inputs(v)
    ks = _int_list(v["precision_ks"], "precision-ks")
    report = M.evaluate(queries, index, judge, max(ks), precision_ks=ks)
    atomic_write(v["curve"], M.precision_curve_csv(report).encode())
    print(f"wrote {v['curve']} points={len(ks)}", file=out)


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "encode": cmd_encode, "index": cmd_index,
    "query": cmd_query, "eval": cmd_eval, "curves": cmd_curves,
}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        values = resolve(args)
        COMMANDS[args.command](values, out)
    except DCWHError as exc:
        msg = " ".join(str(exc).split())
        print(f"error code={exc.code} exit={exc.exit_code} message={msg}", file=err)
        return exc.exit_code
    except OSError as exc:
        print(f"error code=io exit=3 message={exc}", file=err)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
