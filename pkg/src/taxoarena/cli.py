"""Single command-line entry point for the whole evaluation pipeline.

Every subcommand fronts one module: sample (taxonomy), metrics (similarity),
fid-is (distributional), schedule/rank/agree (arena), judge/retrieve
(clients), oracle (worlds), serve (service). Commands are deterministic for
a fixed --seed; the two network commands accept --replay files of recorded
responses instead.

Exit codes: 2 bad flags, 3 input error, 4 compute error, 5 network error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import arena, clients, distributional, errors, seeding, service, similarity
from . import taxonomy as tax
from . import worlds as worlds_mod
from .embeddings import KIND_CONCEPT_TEXT, KIND_IMAGE, load_embeddings

EXIT_BAD_FLAGS = 2
EXIT_INPUT = 3
EXIT_COMPUTE = 4
EXIT_NETWORK = 5

PAPER_STAGE1 = {tax.RelationKind.HYPERNYMY: 0.8,
                tax.RelationKind.HYPONYMY: 0.1,
                tax.RelationKind.SYNSET_MIXING: 0.1}
PAPER_STAGE2 = {tax.RelationKind.HYPERNYMY: 1e-5,
                tax.RelationKind.HYPONYMY: 0.05,
                tax.RelationKind.SYNSET_MIXING: 0.1}

_KIND_ALIASES = {"hyper": tax.RelationKind.HYPERNYMY,
                 "hypo": tax.RelationKind.HYPONYMY,
                 "mix": tax.RelationKind.SYNSET_MIXING}


def _parse_weights(text: str) -> dict:
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        key = key.strip().lower()
        if key not in _KIND_ALIASES:
            raise errors.MalformedRecord(0, f"unknown relation kind {key!r}")
        out[_KIND_ALIASES[key]] = float(value)
    return out


def _load_graph(path: str) -> tax.TaxonomyGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return tax.load_taxonomy(fh)


def _load_dataset(path: str) -> tax.SampledDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return tax.SampledDataset.load(fh)


def _load_battles_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return arena.battle_index(arena.load_battles(fh))


def _load_verdicts_file(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return arena.load_verdicts(fh)


# --- subcommands --------------------------------------------------------------

def cmd_sample(args) -> int:
    graph = _load_graph(args.taxonomy)
    stage1 = _parse_weights(args.stage1) if args.stage1 else PAPER_STAGE1
    stage2 = _parse_weights(args.stage2) if args.stage2 else PAPER_STAGE2
    dataset = tax.sample_dataset(graph, args.seed, stage1, stage2, args.target_size)
    with open(args.out, "w", encoding="utf-8") as fh:
        dataset.save(fh)
    counts = {k.value: v for k, v in sorted(dataset.counts_by_kind().items(),
                                            key=lambda kv: kv[0].value)}
    print(f"sampled {len(dataset.entries)} entries: {counts}")
    return 0


def cmd_metrics(args) -> int:
    graph = _load_graph(args.taxonomy)
    text_store = load_embeddings(args.embeddings_text, kind=KIND_CONCEPT_TEXT)
    image_store = load_embeddings(args.embeddings_image, kind=KIND_IMAGE)
    subset_of = {}
    if args.dataset:
        subset_of = {e.id: e.subset for e in _load_dataset(args.dataset).entries}
    depth = args.depth if args.depth == "all" else int(args.depth)
    records = []
    for image in sorted(image_store.ids):
        system, _, concept = image.partition("/")
        if not concept or concept not in graph:
            continue
        records.append(similarity.similarity_record(
            graph, text_store, image_store, concept, system, image=image,
            depth=depth))
    report = similarity.aggregate(records, subset_of or None)
    with open(args.out, "w", encoding="utf-8") as fh:
        report.to_csv(fh)
    print(f"wrote {len(report.cells)} report cells over {len(records)} records "
          f"to {args.out}")
    return 0


def cmd_fid_is(args) -> int:
    report = {}
    if args.features and args.ref_features:
        feats = load_embeddings(args.features)
        ref = load_embeddings(args.ref_features)
        stats_a = distributional.fit_gaussian(
            [feats.vector(i) for i in feats.ids])
        stats_b = distributional.fit_gaussian(
            [ref.vector(i) for i in ref.ids])
        report["frechet_distance"] = distributional.frechet_distance(stats_a, stats_b)
    if args.probs:
        with open(args.probs, "r", encoding="utf-8") as fh:
            _, rows = distributional.load_prob_rows(fh)
        mean, sd = distributional.inception_score(rows, splits=args.splits)
        report["inception_score"] = {"mean": mean, "sd": sd, "splits": args.splits}
    if not report:
        raise errors.EmptyInput(
            "need --features with --ref-features, and/or --probs")
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    print(out)
    return 0


def cmd_schedule(args) -> int:
    dataset = _load_dataset(args.dataset)
    concepts = [e.id for e in dataset.entries]
    subset_of = {e.id: e.subset for e in dataset.entries}
    systems = [s.strip() for s in args.systems.split(",") if s.strip()]
    battles = arena.schedule_battles(
        concepts, systems, args.seed, battles_per_concept=args.battles_per_concept,
        variant=args.variant, subset_of=subset_of)
    with open(args.out, "w", encoding="utf-8") as fh:
        arena.save_battles(battles, fh)
    print(f"scheduled {len(battles)} battles over {len(concepts)} concepts")
    return 0


def cmd_judge(args) -> int:
    battles = _load_battles_file(args.battles)
    config = clients.JudgeConfig(endpoint=args.endpoint, model=args.model,
                                 api_key_env=args.api_key_env,
                                 max_retries=args.max_retries)
    if args.replay:
        with open(args.replay, "r", encoding="utf-8") as fh:
            transport = clients.replay_transport(clients.load_transcripts(fh))
    else:
        transport = clients.http_transport(config)
    definitions = {}
    if args.taxonomy:
        graph = _load_graph(args.taxonomy)
        definitions = {i: s.definition for i, s in graph.synsets.items()
                       if s.definition}
    judged = 0
    with open(args.out, "a", encoding="utf-8") as out_fh:
        sink = None
        transcript_fh = None
        if args.transcripts:
            transcript_fh = open(args.transcripts, "a", encoding="utf-8")
            sink = clients.transcript_writer(transcript_fh)
        try:
            for battle in battles.values():
                refs = (
                    args.image_url_template.format(system=battle.side_a,
                                                   concept=battle.concept_id),
                    args.image_url_template.format(system=battle.side_b,
                                                   concept=battle.concept_id),
                )
                definition = (definitions.get(battle.concept_id)
                              if battle.variant == arena.VARIANT_WITH_DEF else None)
                verdict, _ = clients.judge_pair(battle, refs, config, transport,
                                                definition=definition,
                                                transcript_sink=sink)
                arena.save_verdicts([verdict], out_fh)
                judged += 1
        finally:
            if transcript_fh is not None:
                transcript_fh.close()
    print(f"judged {judged} battles")
    return 0


def cmd_rank(args) -> int:
    battles = _load_battles_file(args.battles)
    verdicts = _load_verdicts_file(args.verdicts)
    if args.judge:
        verdicts = [v for v in verdicts if v.judge_id == args.judge]
    if args.subset:
        verdicts = [v for v in verdicts if battles[v.battle_id].subset == args.subset]
    if args.variant:
        verdicts = [v for v in verdicts if battles[v.battle_id].variant == args.variant]
    intervals = arena.bootstrap_intervals(verdicts, battles,
                                          resamples=args.resamples, seed=args.seed)
    counts = arena.battle_counts(verdicts, battles)
    rows = arena.leaderboard_rows(intervals, counts)
    with open(args.out, "w", encoding="utf-8") as fh:
        arena.leaderboard_csv(rows, fh)
    for row in rows:
        print(f"{row['system']:24s} {row['rendered']}")
    return 0


def cmd_agree(args) -> int:
    battles = _load_battles_file(args.battles)
    verdicts = _load_verdicts_file(args.verdicts)
    by_judge = {args.judge_a: [], args.judge_b: []}
    for v in verdicts:
        if v.judge_id in by_judge:
            by_judge[v.judge_id].append(v)
    report: dict = {}
    ratings = {}
    for judge, judged in by_judge.items():
        if not judged:
            raise errors.EmptyInput(f"no verdicts from judge {judge!r}")
        ratings[judge] = arena.elo_scale(arena.fit_bradley_terry(judged, battles))
    shared_systems = sorted(set(ratings[args.judge_a].systems)
                            & set(ratings[args.judge_b].systems))
    if len(shared_systems) >= 2:
        elo_a = [ratings[args.judge_a].elo_of(s) for s in shared_systems]
        elo_b = [ratings[args.judge_b].elo_of(s) for s in shared_systems]
        report["spearman"] = arena.spearman(elo_a, elo_b)
        report["systems"] = shared_systems
    cm = arena.confusion_matrix(by_judge[args.judge_a], by_judge[args.judge_b])
    report["confusion"] = {
        "labels": [o.value for o in cm.labels],
        "counts": cm.counts.tolist(),
    }
    if args.rewards:
        table = arena.RewardTable()
        with open(args.rewards, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                table.add(obj["system"], obj["concept"], float(obj["score"]))
        systems = sorted({s for (s, _) in table.scores})
        mw = {}
        for i, si in enumerate(systems):
            for sj in systems[i + 1:]:
                u, p = arena.mann_whitney(table.by_system(si), table.by_system(sj))
                mw[f"{si}|{sj}"] = {"U": u, "p": p}
        report["mann_whitney"] = mw
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    print(out)
    return 0


def cmd_oracle(args) -> int:
    report = {"worlds": 0, "posterior_argmax_passes": 0, "witnesses": []}
    if args.worlds:
        paths = sorted(Path(args.worlds).glob("*.json"))
        if not paths:
            raise errors.EmptyInput(f"no world files under {args.worlds}")
        for path in paths:
            with open(path, "r", encoding="utf-8") as fh:
                world = worlds_mod.DiscreteWorld.from_json(fh)
            ok, witness = worlds_mod.check_posterior_argmax(world)
            report["worlds"] += 1
            if ok:
                report["posterior_argmax_passes"] += 1
            else:
                report["witnesses"].append({"file": path.name, "outcome": witness})
    if args.families:
        rng = seeding.substream(args.seed, "oracle-families")
        passes = 0
        for _ in range(args.families):
            family = _interpolation_family(rng)
            ok, _ = worlds_mod.check_specificity_divergence_monotone(family)
            passes += int(ok)
        report["families"] = args.families
        report["monotone_passes"] = passes
    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    print(out)
    return 0


def _interpolation_family(rng, steps: int = 6) -> list:
    """Worlds sharing one concept's distribution while its siblings drift away."""
    import numpy as np

    n_outcomes = int(rng.integers(4, 9))
    own = rng.random(n_outcomes // 2) + 0.05
    own = np.concatenate([own, np.zeros(n_outcomes - own.size)])
    own /= own.sum()
    far = np.concatenate([np.zeros(n_outcomes // 2),
                          rng.random(n_outcomes - n_outcomes // 2) + 0.05])
    far /= far.sum()
    family = []
    for t in np.linspace(0.0, 0.9, steps):
        sibling = (1.0 - t) * own + t * far
        likelihood = np.column_stack([own, sibling])
        family.append(worlds_mod.DiscreteWorld(
            ["target", "sibling"],
            [f"x{i}" for i in range(n_outcomes)],
            likelihood, np.array([0.5, 0.5])))
    return family


def cmd_retrieve(args) -> int:
    lemmas = [line.strip() for line in Path(args.lemmas).read_text(
        encoding="utf-8").splitlines() if line.strip()]
    if args.replay:
        canned = {}
        with open(args.replay, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    canned[obj["url"]] = obj["body"]

        def transport(url: str) -> str:
            if url not in canned:
                raise errors.TransportError(f"no recorded response for {url}")
            return canned[url]
    else:
        transport = clients.http_url_transport()
    seen: set = set()
    found = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for lemma in lemmas:
            try:
                result = clients.retrieve_top1(lemma, seen, transport)
                fh.write(json.dumps({
                    "lemma": lemma, "url": result.url,
                    "already_seen": result.already_seen,
                }) + "\n")
                found += 1
            except errors.NoResult:
                fh.write(json.dumps({
                    "lemma": lemma, "url": None, "already_seen": False,
                }) + "\n")
    print(f"retrieved {found}/{len(lemmas)} lemmas, {len(seen)} unique images")
    return 0


def cmd_serve(args) -> int:
    config = service.load_config(args.config) if args.config else service.load_config()
    if args.port is not None:
        config.port = args.port
    if args.data_dir:
        config.data_dir = Path(args.data_dir)
    if args.battles:
        config.battles_file = Path(args.battles)
    if args.taxonomy:
        config.taxonomy_file = Path(args.taxonomy)
    if args.roster:
        config.roster_file = Path(args.roster)
    if args.image_dir:
        config.image_dir = Path(args.image_dir)
    if args.static_dir:
        config.static_dir = Path(args.static_dir)
    if args.seed is not None:
        config.seed = args.seed
    service.run_server(config)
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxoarena",
        description="Taxonomy-conditioned image generation evaluation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0,
                       help="64-bit seed; every stage derives a named substream "
                            "from it (default 0)")

    p = sub.add_parser("sample", help="sample a benchmark subset from a taxonomy")
    p.add_argument("--taxonomy", required=True, help="synset JSON-lines file")
    p.add_argument("--out", required=True, help="output dataset JSON-lines file")
    p.add_argument("--target-size", type=int, default=1202,
                   help="number of entries to sample (default 1202)")
    p.add_argument("--stage1", default=None,
                   help="stage-1 kind weights, e.g. hyper=0.8,hypo=0.1,mix=0.1 "
                        "(default: those values)")
    p.add_argument("--stage2", default=None,
                   help="stage-2 acceptance, e.g. hyper=1e-5,hypo=0.05,mix=0.1 "
                        "(default: those values)")
    add_seed(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("metrics", help="taxonomy-aware similarity report")
    p.add_argument("--taxonomy", required=True, help="synset JSON-lines file")
    p.add_argument("--embeddings-text", required=True,
                   help="concept-text embeddings (text or EMB1 binary)")
    p.add_argument("--embeddings-image", required=True,
                   help="image embeddings keyed '<system>/<concept>'")
    p.add_argument("--dataset", default=None,
                   help="sampled dataset file providing subset tags")
    p.add_argument("--depth", default="1",
                   help="hypernym depth: positive integer or 'all' (default 1)")
    p.add_argument("--out", required=True, help="output CSV report")
    add_seed(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fid-is", help="Frechet distance and Inception Score")
    p.add_argument("--features", default=None,
                   help="feature vectors of the evaluated population")
    p.add_argument("--ref-features", default=None,
                   help="feature vectors of the reference population")
    p.add_argument("--probs", default=None,
                   help="class-probability JSON-lines file for the Inception Score")
    p.add_argument("--splits", type=int, default=10,
                   help="Inception Score split count (default 10)")
    p.add_argument("--out", default=None, help="optional JSON report path")
    add_seed(p)
    p.set_defaults(func=cmd_fid_is)

    p = sub.add_parser("schedule", help="schedule pairwise battles")
    p.add_argument("--dataset", required=True, help="sampled dataset file")
    p.add_argument("--systems", required=True, help="comma-separated system ids")
    p.add_argument("--battles-per-concept", type=int, default=1,
                   help="battles per concept (default 1)")
    p.add_argument("--variant", default=arena.VARIANT_WITH_DEF,
                   choices=[arena.VARIANT_WITH_DEF, arena.VARIANT_NO_DEF],
                   help="prompt variant recorded on each battle")
    p.add_argument("--out", required=True, help="output battles JSON-lines file")
    add_seed(p)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("judge", help="collect judge verdicts for battles")
    p.add_argument("--battles", required=True, help="battles JSON-lines file")
    p.add_argument("--out", required=True, help="verdicts file (appended)")
    p.add_argument("--replay", default=None,
                   help="recorded transcript JSON-lines file; replaces live calls")
    p.add_argument("--transcripts", default=None,
                   help="append raw transcripts to this JSON-lines file")
    p.add_argument("--taxonomy", default=None,
                   help="taxonomy file supplying definitions for with_def battles")
    p.add_argument("--endpoint", default=clients.JudgeConfig.endpoint,
                   help="judge chat-completions endpoint URL")
    p.add_argument("--model", default=clients.JudgeConfig.model,
                   help="judge model name (also the recorded judge id)")
    p.add_argument("--api-key-env", default=clients.JudgeConfig.api_key_env,
                   help="environment variable holding the API key")
    p.add_argument("--max-retries", type=int, default=2,
                   help="retries per battle on transport or parse failure")
    p.add_argument("--image-url-template",
                   default="images/{system}/{concept}.png",
                   help="image reference template with {system} and {concept}")
    add_seed(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("rank", help="fit ratings and write the leaderboard")
    p.add_argument("--verdicts", required=True, help="verdicts JSON-lines file")
    p.add_argument("--battles", required=True, help="battles JSON-lines file")
    p.add_argument("--out", required=True, help="leaderboard CSV path")
    p.add_argument("--resamples", type=int, default=arena.DEFAULT_RESAMPLES,
                   help="bootstrap resamples (default 1000)")
    p.add_argument("--subset", default=None, help="restrict to one subset tag")
    p.add_argument("--variant", default=None, help="restrict to one prompt variant")
    p.add_argument("--judge", default=None, help="restrict to one judge id")
    add_seed(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("agree", help="judge agreement statistics")
    p.add_argument("--verdicts", required=True, help="verdicts JSON-lines file")
    p.add_argument("--battles", required=True, help="battles JSON-lines file")
    p.add_argument("--judge-a", required=True, help="first judge id")
    p.add_argument("--judge-b", required=True, help="second judge id")
    p.add_argument("--rewards", default=None,
                   help="reward rows {'system','concept','score'} for Mann-Whitney")
    p.add_argument("--out", default=None, help="optional JSON report path")
    add_seed(p)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("oracle", help="check metric semantics on discrete worlds")
    p.add_argument("--worlds", default=None, help="directory of world JSON files")
    p.add_argument("--families", type=int, default=0,
                   help="also check this many random interpolation families")
    p.add_argument("--out", default=None, help="optional JSON report path")
    add_seed(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("retrieve", help="top-1 image retrieval manifest")
    p.add_argument("--lemmas", required=True, help="file with one lemma per line")
    p.add_argument("--out", required=True, help="output manifest JSON-lines file")
    p.add_argument("--replay", default=None,
                   help="recorded {'url','body'} responses; replaces live calls")
    add_seed(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--port", type=int, default=None, help="listen port")
    p.add_argument("--data-dir", default=None, help="log/snapshot directory")
    p.add_argument("--battles", default=None, help="battles JSON-lines file")
    p.add_argument("--taxonomy", default=None,
                   help="taxonomy file supplying concept texts and definitions")
    p.add_argument("--roster", default=None, help="annotator roster file")
    p.add_argument("--image-dir", default=None, help="directory of image files")
    p.add_argument("--static-dir", default=None, help="frontend asset directory")
    add_seed(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except errors.NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except errors.ComputeError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (errors.InputError, errors.StorageFailure, FileNotFoundError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
