"""Command-line entry point.

Exit status: 0 success or positive verdict, 1 negative verdict, 2 usage or
input error, 3 unknown/inconclusive.
"""

from __future__ import annotations

import argparse
import json
import sys
from random import Random
from typing import Dict, List, Optional, Sequence

from . import gbs as gbs_mod
from . import grushko as grushko_mod
from . import qh as qh_mod
from ._lexer import ParseError, TokenStream
from .gog import (
    GogError,
    GraphOfGroups,
    _parse_injection,
    parse_gog,
    parse_label,
    render_label,
    serialize_gog,
    validate,
)
from .labels import ClassSpec, LabelError
from .moves import (
    Certificate,
    MoveError,
    apply_move,
    collapse_edges,
    parse_script,
    reduce_graph,
    refine_at_vertex,
    render_move,
    transport_word,
)
from .words import (
    WordError,
    dominates,
    is_elliptic,
    parse_word,
    reduce_word,
    render_word,
    subgroup_elliptic,
)

OK, NEGATIVE, USAGE, UNKNOWN = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load(path: str) -> GraphOfGroups:
    return parse_gog(_read(path))


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        print(json.dumps(doc, sort_keys=True, indent=2))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _class(name: str) -> ClassSpec:
    try:
        return ClassSpec(name)
    except ValueError:
        raise UsageError(f"unknown class {name!r} (choose from {', '.join(c.value for c in ClassSpec)})") from None


def _edge_list(text: Optional[str]) -> List[str]:
    return [x for x in (text or "").split(",") if x]


# -- gog ---------------------------------------------------------------------------


def cmd_gog_parse(args) -> int:
    g = _load(args.file)
    text = serialize_gog(g)
    _emit(args, {"canonical": text, "vertices": len(g.vertices), "edges": len(g.edges)}, text)
    return OK


def cmd_gog_validate(args) -> int:
    g = _load(args.file)
    report = validate(g, _class(args.cls))
    lines = [f"class {args.cls}: {'pass' if report.passed else 'fail'}"]
    lines += [f"violation: edge {eid} labelled {lab}" for eid, lab in report.violations]
    lines += [f"non-minimal: vertex {v}" for v in report.non_minimal]
    doc = {"passed": report.passed, "violations": [list(v) for v in report.violations],
           "non_minimal": list(report.non_minimal)}
    _emit(args, doc, "\n".join(lines))
    return OK if report.passed else NEGATIVE


def cmd_gog_dot(args) -> int:
    g = _load(args.file)
    text = serialize_gog(g, "dot")
    _emit(args, {"dot": text}, text)
    return OK


# -- word --------------------------------------------------------------------------


def cmd_word_reduce(args) -> int:
    g = _load(args.file)
    w = parse_word(g, args.word)
    r = reduce_word(g, w, cyclic=args.cyclic)
    text = render_word(g, r)
    _emit(args, {"word": text, "edges": r.length, "base": r.base}, text)
    return OK


def _verdict_doc(g, v) -> dict:
    doc = {"status": v.status}
    if v.hyperbolic:
        doc["translation_length"] = v.translation_length
    if v.witness is not None:
        doc["witness"] = render_word(g, v.witness)
    if v.reason:
        doc["reason"] = v.reason
    return doc


def cmd_word_elliptic(args) -> int:
    g = _load(args.file)
    v = is_elliptic(g, parse_word(g, args.word), _edge_list(args.collapsed))
    doc = _verdict_doc(g, v)
    text = v.status + (f" {v.translation_length}" if v.hyperbolic else "")
    if v.reason:
        text += f" ({v.reason})"
    _emit(args, doc, text)
    return UNKNOWN if v.status == "Unknown" else OK


def cmd_word_subgroup(args) -> int:
    g = _load(args.file)
    words = [parse_word(g, w) for w in args.words]
    base = words[0].base
    if any(w.base != base for w in words):
        raise UsageError("all generators must be based at the same vertex")
    v = subgroup_elliptic(g, words, _edge_list(args.collapsed))
    doc = {"status": v.status}
    text = v.status
    if v.witness is not None:
        doc["witness"] = render_word(g, v.witness)
        text += f" {doc['witness']}"
    if v.reason:
        doc["reason"] = v.reason
    _emit(args, doc, text)
    return {"Elliptic": OK, "NotElliptic": NEGATIVE}.get(v.status, UNKNOWN)


def cmd_word_dominates(args) -> int:
    from .sampling import random_word
    g = _load(args.file)
    rng = Random(args.seed)
    samples = [random_word(g, rng, rng.randint(0, 6)) for _ in range(args.samples)]
    v = dominates(g, _edge_list(args.e1), _edge_list(args.e2), samples)
    doc = {"status": v.status}
    text = v.status
    if v.witness is not None:
        doc["witness"] = render_word(g, v.witness)
        text += f" {doc['witness']}"
    _emit(args, doc, text)
    return {"Dominates": OK, "RefutedBy": NEGATIVE}.get(v.status, UNKNOWN)


# -- move --------------------------------------------------------------------------


def cmd_move_apply(args) -> int:
    from .sampling import random_word
    g = _load(args.file)
    text = args.moves if args.script is None else _read(args.script)
    script = parse_script(text.replace("\\n", "\n"))
    rng = Random(args.seed)
    violations = 0
    h = g
    for m in script:
        samples = [random_word(h, rng, rng.randint(0, 6)) for _ in range(args.samples)]
        nxt = apply_move(h, m)
        for w in samples:
            if is_elliptic(h, w).status != is_elliptic(nxt, transport_word(h, m, w)).status:
                violations += 1
        h = nxt
    out = serialize_gog(h)
    doc = {"result": out, "moves": [render_move(m) for m in script], "samples_per_move": args.samples,
           "invariance_violations": violations}
    _emit(args, doc, out + (f"# invariance violations: {violations}\n" if args.samples else ""))
    return NEGATIVE if violations else OK


def cmd_move_reduce(args) -> int:
    g = _load(args.file)
    r, cert = reduce_graph(g)
    out = serialize_gog(r)
    doc = {"result": out, "certificate": [render_move(m) for m in cert.script]}
    text = out + "".join(f"# {render_move(m)}\n" for m in cert.script)
    _emit(args, doc, text)
    return OK


def cmd_move_collapse(args) -> int:
    g = _load(args.file)
    chosen = _class(args.cls) if args.cls else set(args.edges)
    out = serialize_gog(collapse_edges(g, chosen))
    _emit(args, {"result": out}, out)
    return OK


def _parse_attach(items: Sequence[str]) -> Dict:
    att = {}
    for item in items:
        key, sep, rest = item.partition("=")
        target, sep2, inj_text = rest.partition(":")
        if not sep or not sep2:
            raise UsageError(f"bad attachment {item!r}; expected edge[.side]=vertex:injection")
        ts = TokenStream.of(inj_text)
        inj = _parse_injection(ts)
        if not ts.at("eof"):
            raise UsageError(f"bad injection in {item!r}")
        if "." in key:
            fid, side = key.split(".", 1)
            att[(fid, side)] = (target, inj)
        else:
            att[key] = (target, inj)
    return att


def cmd_move_refine(args) -> int:
    g = _load(args.file)
    splitting = _load(args.splitting)
    out = serialize_gog(refine_at_vertex(g, args.vertex, splitting, _parse_attach(args.attach)))
    _emit(args, {"result": out}, out)
    return OK


# -- gbs ---------------------------------------------------------------------------


def cmd_gbs_classify(args) -> int:
    c = gbs_mod.classify_gbs(_load(args.file))
    _emit(args, {"kind": c.kind, "jsj_verdict": c.jsj_verdict}, f"{c.kind} {c.jsj_verdict}")
    return OK


def cmd_gbs_modular(args) -> int:
    g = _load(args.file)
    q = gbs_mod.modular(g, parse_word(g, args.word))
    _emit(args, {"value": str(q)}, str(q))
    return OK


def cmd_gbs_connect(args) -> int:
    a, b = _load(args.a), _load(args.b)
    env = gbs_mod.Bounds.from_env()
    bounds = gbs_mod.Bounds(args.max_size if args.max_size is not None else env.max_size,
                            args.max_depth if args.max_depth is not None else env.max_depth)
    r = gbs_mod.connect_search(a, b, bounds)
    doc = {"status": r.status, "explored": r.explored}
    text = r.status
    if r.witness:
        doc["witness"] = {"invariant": r.witness[0], "a": r.witness[1], "b": r.witness[2]}
        text += f" {r.witness[0]}: {r.witness[1]} != {r.witness[2]}"
    if r.certificate is not None:
        doc["certificate"] = [render_move(m) for m in r.certificate.script]
        text += "\n" + r.certificate.to_text()
    _emit(args, doc, text)
    return {"Equivalent": OK, "Distinct": NEGATIVE}.get(r.status, UNKNOWN)


# -- grushko -----------------------------------------------------------------------


def cmd_grushko_verdict(args) -> int:
    v = grushko_mod.grushko_verdict(_load(args.file))
    text = "GrushkoTree" if v.is_grushko else "NotGrushko\n" + "\n".join(v.reasons)
    _emit(args, {"grushko": v.is_grushko, "reasons": list(v.reasons)}, text)
    return OK if v.is_grushko else NEGATIVE


def cmd_grushko_fingerprint(args) -> int:
    fp = grushko_mod.grushko_fingerprint(_load(args.file))
    _emit(args, {"atoms": list(fp.atoms), "rank": fp.rank},
          f"atoms=[{', '.join(fp.atoms)}] rank={fp.rank}")
    return OK


def cmd_grushko_compare(args) -> int:
    r = grushko_mod.grushko_compare(_load(args.a), _load(args.b))
    _emit(args, {"status": r}, r)
    return {"SameSpace": OK, "DifferentSpace": NEGATIVE}.get(r, UNKNOWN)


# -- qh ----------------------------------------------------------------------------


def cmd_qh_chi(args) -> int:
    r = qh_mod.euler_characteristic(qh_mod.parse_sig(args.sig))
    _emit(args, {"chi": str(r.chi), "hyperbolic": r.hyperbolic},
          f"{r.chi} {'hyperbolic' if r.hyperbolic else 'not-hyperbolic'}")
    return OK


def cmd_qh_scc(args) -> int:
    r = qh_mod.has_essential_scc(qh_mod.parse_sig(args.sig))
    _emit(args, {"essential_scc": r}, r)
    return {"Yes": OK, "No": NEGATIVE}.get(r, UNKNOWN)


def cmd_qh_arc_case(args) -> int:
    r = qh_mod.boundary_splitting_case(qh_mod.parse_sig(args.sig), args.component)
    _emit(args, {"case": r.case, "edge_group": render_label(r.edge_group)},
          f"{r.case} {render_label(r.edge_group)}")
    return OK


def _load_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def cmd_qh_dual(args) -> int:
    sig = qh_mod.parse_sig(args.sig)
    data = _load_json(args.cutfile)
    try:
        pieces = tuple(qh_mod.parse_sig(p) for p in data["pieces"])
        curves = tuple(tuple(tuple(end) for end in c) for c in data["curves"])
    except (KeyError, TypeError):
        raise UsageError("cut file needs 'pieces' (signatures) and 'curves' (lists of [piece, slot])") from None
    g, pieces_map = qh_mod.dual_tree(sig, qh_mod.CutSystem(pieces, curves))
    out = serialize_gog(g)
    doc = {"graph": out, "pieces": {k: s.render() for k, s in pieces_map.items()}}
    _emit(args, doc, out + "".join(f"# {k} = {s.render()}\n" for k, s in pieces_map.items()))
    return OK


def _parse_mark(text: str):
    label, sep, name = text.rpartition("@")
    if not sep:
        raise UsageError(f"bad mark {text!r}; expected <label>@<atom name>")
    return parse_label(label), name


def cmd_qh_fill(args) -> int:
    g = _load(args.file)
    out = serialize_gog(qh_mod.fill(g, [_parse_mark(m) for m in args.marks]))
    _emit(args, {"result": out}, out)
    return OK


def _assignment(obj) -> qh_mod.Assignment:
    if obj == "finite":
        return qh_mod.FiniteImage()
    if obj == "unconstrained":
        return qh_mod.Unconstrained()
    if isinstance(obj, dict) and "boundary" in obj:
        return qh_mod.InBoundary(int(obj["boundary"]), bool(obj.get("finite_index", True)))
    raise UsageError(f"bad assignment {obj!r}; use \"finite\", \"unconstrained\" or "
                     "{\"boundary\": k, \"finite_index\": bool}")


def cmd_qh_validate(args) -> int:
    g = _load(args.file)
    data = _load_json(args.datafile)
    try:
        qd = qh_mod.QhData(
            parse_label(data.get("fiber", "1")),
            qh_mod.parse_sig(data["sig"]),
            {k: _assignment(v) for k, v in data.get("incident", {}).items()},
            {k: _assignment(v) for k, v in data.get("relative", {}).items()},
        )
    except KeyError as exc:
        raise UsageError(f"QH data file is missing {exc}") from None
    r = qh_mod.validate_qh(g, args.vertex, qd)
    doc = {"is_qh": r.is_qh, "used": list(r.used), "unused": list(r.unused),
           "flexibility": r.flexibility, "problems": list(r.problems)}
    text = (f"is_qh={'yes' if r.is_qh else 'no'} used={list(r.used)} unused={list(r.unused)} "
            f"flexible={r.flexibility}")
    _emit(args, doc, "\n".join([text] + list(r.problems)))
    return OK if r.is_qh else NEGATIVE


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="structured JSON output")
    common.add_argument("--seed", type=int, default=0, help="seed for sampled checks (default 0)")

    p = argparse.ArgumentParser(prog="bassserre", description="Bass-Serre calculus toolkit")
    top = p.add_subparsers(dest="group", required=True)

    def group(name, help_):
        sp = top.add_parser(name, help=help_)
        return sp.add_subparsers(dest="cmd", required=True)

    def cmd(sub, name, fn, help_):
        c = sub.add_parser(name, parents=[common], help=help_)
        c.set_defaults(fn=fn)
        return c

    g = group("gog", "graph-of-groups files")
    c = cmd(g, "parse", cmd_gog_parse, "print canonical text")
    c.add_argument("file")
    c = cmd(g, "validate", cmd_gog_validate, "check edge labels against a class")
    c.add_argument("file")
    c.add_argument("--class", dest="cls", default="any",
                   help="trivial, finite, finite-cyclic, cyclic, slender or any")
    c = cmd(g, "dot", cmd_gog_dot, "Graphviz output")
    c.add_argument("file")

    w = group("word", "loop words")
    c = cmd(w, "reduce", cmd_word_reduce, "Britton reduction")
    c.add_argument("file")
    c.add_argument("word")
    c.add_argument("--cyclic", action="store_true")
    c = cmd(w, "elliptic", cmd_word_elliptic, "elliptic/hyperbolic status")
    c.add_argument("file")
    c.add_argument("word")
    c.add_argument("--collapsed", help="comma-separated edges collapsed first")
    c = cmd(w, "subgroup", cmd_word_subgroup, "ellipticity of a finitely generated subgroup")
    c.add_argument("file")
    c.add_argument("words", nargs="+")
    c.add_argument("--collapsed")
    c = cmd(w, "dominates", cmd_word_dominates, "does the collapse along E1 dominate that along E2")
    c.add_argument("file")
    c.add_argument("--e1", default="")
    c.add_argument("--e2", default="")
    c.add_argument("--samples", type=int, default=20)

    m = group("move", "deformation moves")
    c = cmd(m, "apply", cmd_move_apply, "apply a move or script")
    c.add_argument("file")
    c.add_argument("moves", nargs="?", default="", help="moves separated by ';' or newlines")
    c.add_argument("--script", help="file with one move per line")
    c.add_argument("--samples", type=int, default=0, help="words per move for the invariance check")
    c = cmd(m, "reduce", cmd_move_reduce, "collapse until reduced")
    c.add_argument("file")
    c = cmd(m, "collapse", cmd_move_collapse, "collapse edges to quotient vertices")
    c.add_argument("file")
    c.add_argument("edges", nargs="*")
    c.add_argument("--class", dest="cls", help="collapse every edge outside this class")
    c = cmd(m, "refine", cmd_move_refine, "replace a vertex by a splitting")
    c.add_argument("file")
    c.add_argument("vertex")
    c.add_argument("splitting")
    c.add_argument("--attach", nargs="*", default=[], help="edge[.side]=vertex:injection")

    b = group("gbs", "generalized Baumslag-Solitar graphs")
    c = cmd(b, "classify", cmd_gbs_classify, "elementary classification and JSJ verdict")
    c.add_argument("file")
    c = cmd(b, "modular", cmd_gbs_modular, "modular homomorphism of a word")
    c.add_argument("file")
    c.add_argument("word")
    c = cmd(b, "connect", cmd_gbs_connect, "bounded deformation-equivalence search")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--max-size", type=int)
    c.add_argument("--max-depth", type=int)

    r = group("grushko", "free splittings")
    c = cmd(r, "verdict", cmd_grushko_verdict, "is this a Grushko decomposition")
    c.add_argument("file")
    c = cmd(r, "fingerprint", cmd_grushko_fingerprint, "atoms and rank")
    c.add_argument("file")
    c = cmd(r, "compare", cmd_grushko_compare, "same Grushko deformation space?")
    c.add_argument("a")
    c.add_argument("b")

    q = group("qh", "orbifolds and QH vertices")
    c = cmd(q, "chi", cmd_qh_chi, "orbifold Euler characteristic")
    c.add_argument("sig")
    c = cmd(q, "scc", cmd_qh_scc, "essential simple closed curve?")
    c.add_argument("sig")
    c = cmd(q, "arc-case", cmd_qh_arc_case, "splitting relative to other boundary components")
    c.add_argument("sig")
    c.add_argument("component", type=int)
    c = cmd(q, "dual", cmd_qh_dual, "dual graph of a cut system (JSON file)")
    c.add_argument("sig")
    c.add_argument("cutfile")
    c = cmd(q, "fill", cmd_qh_fill, "filling construction")
    c.add_argument("file")
    c.add_argument("marks", nargs="*", help="<label>@<atom name>")
    c = cmd(q, "validate", cmd_qh_validate, "QH conditions at a vertex (JSON data file)")
    c.add_argument("file")
    c.add_argument("vertex")
    c.add_argument("datafile")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (UsageError, ParseError, GogError, LabelError, WordError, MoveError,
            gbs_mod.GbsError, grushko_mod.GrushkoError, qh_mod.OrbifoldError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
