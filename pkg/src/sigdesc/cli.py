"""Command-line front end: extract, index, query, evaluate, inspect.

Each subcommand is resumable from the files of the previous stage, so a large
extraction can be interrupted and picked up again.  All numeric output uses 6
decimal places.  Exit codes: 0 success, 1 hard failure, 2 usage or
configuration error, 3 partial per-image failure.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

import click
import numpy as np

from .config import ConfigError
from .descriptors import Family, build_descriptors
from .dumpio import read_dump, write_dump
from .evaluation import (
    EvaluationError,
    evaluate,
    format_summary_text,
    write_hits_csv,
    write_html_montage,
    write_summary_csv,
)
from .images import ImageRecord, read_manifest
from .index import DescriptorIndex, load_external_binary, load_external_csv, load_index, save_index, top_k
from .inference import ModelProfile, TorchScriptRunner, load_profile
from .significance import compute_significance, write_pgm
from .tensors import ActivationError

EXIT_PARTIAL = 3

BUILD_FAMILIES = (Family.FC, Family.CONV, Family.COMBINED)


@dataclass(frozen=True)
class PipelineConfig:
    """Shared stage settings, validated once at command entry."""

    out_dir: Path
    q: float
    families: tuple[Family, ...]
    workers: int
    k: int

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise click.UsageError(f"--q must be > 0, got {self.q}")
        if self.k < 1:
            raise click.UsageError(f"--k must be >= 1, got {self.k}")
        if self.workers < 1:
            raise click.UsageError(f"--workers must be >= 1, got {self.workers}")
        if not self.families:
            raise click.UsageError("--families must name at least one family")


def _parse_families(raw: str, allow_external: bool = False) -> tuple[Family, ...]:
    out: list[Family] = []
    for part in raw.split(","):
        part = part.strip().lower()
        if not part:
            continue
        try:
            family = Family(part)
        except ValueError:
            choices = [f.value for f in Family]
            raise click.UsageError(f"unknown family {part!r}; choose from {choices}")
        if family == Family.EXTERNAL and not allow_external:
            raise click.UsageError("family 'external' is import-only; it cannot be built")
        if family not in out:
            out.append(family)
    if not out:
        raise click.UsageError("--families must name at least one family")
    return tuple(out)


def _safe_name(image_id: str) -> str:
    return quote(image_id, safe="-._")


def _dump_path(out_dir: Path, image_id: str) -> Path:
    return out_dir / "dumps" / f"{_safe_name(image_id)}.actd"


def _descriptor_path(out_dir: Path, image_id: str, family: Family) -> Path:
    return out_dir / "descriptors" / f"{_safe_name(image_id)}.{family.value}.npy"


def _index_path(out_dir: Path, family: Family) -> Path:
    return out_dir / f"index-{family.value}.didx"


def _load_runner(model: str | None, profile_name: str) -> tuple[ModelProfile, TorchScriptRunner | None]:
    try:
        profile = load_profile(profile_name)
        runner = None if model is None else TorchScriptRunner(model, profile)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    return profile, runner


@click.group(context_settings={"auto_envvar_prefix": "SIGDESC"})
@click.version_option(package_name="sigdesc")
def main() -> None:
    """Significance-guided image descriptors and retrieval."""


@main.command()
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TorchScript model file; omit with --from-dumps.")
@click.option("--profile", "profile_name", default="vgg16", show_default=True,
              help="Model profile JSON path or bundled profile name.")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--q", default=0.5, show_default=True, help="Significance threshold.")
@click.option("--families", default="fc,conv,combined", show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--from-dumps", is_flag=True,
              help="Read activations from existing dump files instead of a model.")
@click.option("--skip-dumps", is_flag=True,
              help="Do not write dump files (descriptors only).")
def extract(model, profile_name, manifest, out_dir, q, families, workers,
            from_dumps, skip_dumps) -> None:
    """Compute activations and descriptor files for every manifest image."""
    config = PipelineConfig(
        out_dir=Path(out_dir), q=q, families=_parse_families(families),
        workers=workers, k=5,
    )
    if from_dumps and model is not None:
        raise click.UsageError("--from-dumps and --model are mutually exclusive")
    if not from_dumps and model is None:
        raise click.UsageError("need --model, or --from-dumps to reuse dump files")
    profile, runner = _load_runner(model, profile_name)
    try:
        records = read_manifest(manifest)
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read manifest: {exc}")
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "descriptors").mkdir(exist_ok=True)
    if not skip_dumps and not from_dumps:
        (config.out_dir / "dumps").mkdir(exist_ok=True)

    def process(record: ImageRecord) -> str | None:
        """Returns an error message, or None on success."""
        try:
            if from_dumps:
                dump_id, acts = read_dump(_dump_path(config.out_dir, record.image_id))
                if dump_id != record.image_id:
                    return f"dump holds id {dump_id!r}"
            else:
                acts = runner.activations_for_file(record.path)
                if not skip_dumps:
                    write_dump(_dump_path(config.out_dir, record.image_id),
                               record.image_id, acts)
            built = build_descriptors(acts, config.q, profile.config)
            for family in config.families:
                vec = built.get(family).values
                np.save(_descriptor_path(config.out_dir, record.image_id, family), vec)
            return None
        except (OSError, ValueError, ActivationError, ConfigError) as exc:
            return str(exc)

    if config.workers == 1:
        outcomes = [process(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(process, records))

    failures = 0
    log_lines = []
    for record, err in zip(records, outcomes):
        if err is None:
            log_lines.append(f"{record.image_id}\tok")
        else:
            failures += 1
            log_lines.append(f"{record.image_id}\tfailed\t{err}")
            click.echo(f"failed: {record.image_id}: {err}", err=True)
    log_lines.append(f"processed {len(records)}, failed {failures}")
    with open(config.out_dir / "extract.log", "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    click.echo(f"extracted {len(records) - failures}/{len(records)} images "
               f"({len(config.families)} families each)")
    if failures:
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--families", default="fc,conv,combined", show_default=True)
@click.option("--external-csv", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Also build an 'external' index from id,v0,v1,... CSV rows.")
@click.option("--external-bin", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flat little-endian float32 file with external descriptors.")
@click.option("--external-ids", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Id manifest for --external-bin (one id per line).")
@click.option("--external-dim", type=int, default=None,
              help="Vector length for --external-bin.")
def index(manifest, out_dir, families, external_csv, external_bin,
          external_ids, external_dim) -> None:
    """Assemble per-family index files from extracted descriptors."""
    out_path = Path(out_dir)
    wanted = _parse_families(families)
    try:
        records = read_manifest(manifest)
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read manifest: {exc}")
    out_path.mkdir(parents=True, exist_ok=True)
    for family in wanted:
        missing = [r.image_id for r in records
                   if not _descriptor_path(out_path, r.image_id, family).exists()]
        if missing:
            shown = ", ".join(missing[:5]) + ("..." if len(missing) > 5 else "")
            raise click.ClickException(
                f"family {family.value!r}: no descriptor file for {len(missing)} "
                f"ids ({shown}); run extract first"
            )
        entries = ((r.image_id, np.load(_descriptor_path(out_path, r.image_id, family)))
                   for r in records)
        try:
            built = DescriptorIndex.from_entries(family, entries,
                                                 dim=None if records else 0)
        except ValueError as exc:
            raise click.ClickException(f"family {family.value!r}: {exc}")
        save_index(built, _index_path(out_path, family))
        click.echo(f"indexed {len(built)} descriptors of dim {built.dim} "
                   f"-> {_index_path(out_path, family)}")
    if external_csv and external_bin:
        raise click.UsageError("--external-csv and --external-bin are mutually exclusive")
    external = None
    if external_csv:
        try:
            external = load_external_csv(external_csv)
        except (OSError, ValueError) as exc:
            raise click.ClickException(f"external import: {exc}")
    elif external_bin:
        if not external_ids or external_dim is None:
            raise click.UsageError("--external-bin needs --external-ids and --external-dim")
        try:
            external = load_external_binary(external_ids, external_bin, external_dim)
        except (OSError, ValueError) as exc:
            raise click.ClickException(f"external import: {exc}")
    if external is not None:
        save_index(external, _index_path(out_path, Family.EXTERNAL))
        click.echo(f"indexed {len(external)} external descriptors of dim "
                   f"{external.dim} -> {_index_path(out_path, Family.EXTERNAL)}")


def _query_descriptor(out_dir: Path, image_id: str | None, image_path, family: Family,
                      q: float, profile: ModelProfile,
                      runner: TorchScriptRunner | None,
                      index: DescriptorIndex | None = None) -> np.ndarray:
    """Resolve a query descriptor: stored file, dump, index row, live model."""
    if image_id is not None:
        stored = _descriptor_path(out_dir, image_id, family)
        if stored.exists():
            return np.load(stored)
        if family != Family.EXTERNAL:
            dump = _dump_path(out_dir, image_id)
            if dump.exists():
                _, acts = read_dump(dump)
                return build_descriptors(acts, q, profile.config).get(family).values
        if index is not None and image_id in index.ids:
            return index.descriptor(image_id).values
    if family == Family.EXTERNAL:
        # Imported vectors have no activations behind them, so a query id
        # must already be a row of the index.
        raise click.ClickException(
            f"external descriptors are import-only; query {image_id!r} is not "
            f"in the index"
        )
    if image_path is not None:
        if runner is None:
            raise click.ClickException(
                "query image needs --model (no stored descriptor or dump found)"
            )
        acts = runner.activations_for_file(image_path)
        return build_descriptors(acts, q, profile.config).get(family).values
    raise click.ClickException(
        f"no descriptor source for query {image_id!r}; extract it or pass --model"
    )


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--id", "image_id", default=None,
              help="Query by indexed id instead of an image file.")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--profile", "profile_name", default="vgg16", show_default=True)
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Corpus manifest; needed for --format html.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory holding index files (and dumps/descriptors).")
@click.option("--family", default="combined", show_default=True)
@click.option("--q", default=0.5, show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--format", "out_format", type=click.Choice(["text", "csv", "html"]),
              default="text", show_default=True)
def query(image, image_id, model, profile_name, manifest, out_dir, family,
          q, k, out_format) -> None:
    """Rank indexed images against one query image."""
    config = PipelineConfig(out_dir=Path(out_dir), q=q,
                            families=_parse_families(family, allow_external=True),
                            workers=1, k=k)
    target_family = config.families[0]
    if image is None and image_id is None:
        raise click.UsageError("give an IMAGE path or --id of an indexed image")
    profile, runner = _load_runner(model, profile_name)
    index_file = _index_path(config.out_dir, target_family)
    if not index_file.exists():
        raise click.ClickException(f"index file not found: {index_file}")
    loaded = load_index(index_file, expected_family=target_family)
    vec = _query_descriptor(config.out_dir, image_id, image, target_family,
                            config.q, profile, runner, index=loaded)
    if vec.shape[0] != loaded.dim:
        raise click.ClickException(
            f"query descriptor dim {vec.shape[0]} does not match index dim {loaded.dim}"
        )
    result = top_k(loaded, vec, config.k)
    if out_format == "csv":
        click.echo("rank,id,distance")
        for rank, hit in enumerate(result.hits, start=1):
            click.echo(f"{rank},{hit.image_id},{hit.distance:.6f}")
    else:
        for rank, hit in enumerate(result.hits, start=1):
            click.echo(f"{rank}\t{hit.image_id}\t{hit.distance:.6f}")
    if out_format == "html":
        if manifest is None:
            raise click.UsageError("--format html needs --manifest to locate hit images")
        records = {r.image_id: r for r in read_manifest(manifest)}
        query_record = (records.get(image_id) if image_id is not None
                        else ImageRecord(image_id=f"query:{Path(image).name}", path=image))
        from .evaluation import HitAssessment, QueryAssessment, EvaluationReport
        from .evaluation import histogram_distance, histogram_of_file

        query_hist = histogram_of_file(query_record)
        hits = []
        for rank, hit in enumerate(result.hits, start=1):
            rec = records.get(hit.image_id)
            if rec is None:
                raise click.ClickException(f"hit id {hit.image_id!r} not in manifest")
            hits.append(HitAssessment(
                rank=rank, image_id=hit.image_id,
                descriptor_distance=hit.distance,
                histogram_distance=histogram_distance(query_hist, histogram_of_file(rec)),
            ))
        mean = float(np.mean([h.histogram_distance for h in hits]))
        report = EvaluationReport(assessments=(QueryAssessment(
            query_id=query_record.image_id, family=target_family,
            hits=tuple(hits), mean_histogram_distance=mean,
        ),))

        def resolve(wanted: str) -> ImageRecord:
            if wanted == query_record.image_id:
                return query_record
            return records[wanted]

        out_file = config.out_dir / "query-montage.html"
        write_html_montage(report, resolve, out_file)
        click.echo(f"montage -> {out_file}")


@main.command("evaluate")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Corpus manifest (resolves retrieved ids to images).")
@click.option("--queries", "query_manifest", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--profile", "profile_name", default="vgg16", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--q", default=0.5, show_default=True)
@click.option("--families", default="fc,conv,combined", show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--format", "out_formats", type=click.Choice(["csv", "text", "html"]),
              multiple=True, default=("csv", "text"), show_default=True)
def evaluate_cmd(manifest, query_manifest, model, profile_name, out_dir, q,
                 families, k, out_formats) -> None:
    """Score retrieval by color-histogram distance over each query's top k."""
    config = PipelineConfig(out_dir=Path(out_dir), q=q,
                            families=_parse_families(families, allow_external=True),
                            workers=1, k=k)
    profile, runner = _load_runner(model, profile_name)
    try:
        corpus = read_manifest(manifest)
        queries = read_manifest(query_manifest)
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read manifest: {exc}")
    by_id = {r.image_id: r for r in corpus}
    for rec in queries:
        by_id.setdefault(rec.image_id, rec)

    indices = {}
    for family in config.families:
        index_file = _index_path(config.out_dir, family)
        if not index_file.exists():
            click.echo(f"warning: no index for family {family.value!r} "
                       f"({index_file}); skipping", err=True)
            continue
        indices[family] = load_index(index_file, expected_family=family)
    if not indices:
        raise click.ClickException("no index files found for any requested family")

    def provider(record: ImageRecord, family: Family) -> np.ndarray:
        return _query_descriptor(config.out_dir, record.image_id, record.path,
                                 family, config.q, profile, runner,
                                 index=indices.get(family))

    try:
        report = evaluate(queries, indices, lambda i: by_id[i], config.k, provider)
    except (EvaluationError, ValueError) as exc:
        raise click.ClickException(str(exc))

    config.out_dir.mkdir(parents=True, exist_ok=True)
    write_hits_csv(report, config.out_dir / "hits.csv")
    written = [str(config.out_dir / "hits.csv")]
    if "csv" in out_formats:
        write_summary_csv(report, config.out_dir / "summary.csv")
        written.append(str(config.out_dir / "summary.csv"))
    if "text" in out_formats:
        text = format_summary_text(report)
        (config.out_dir / "summary.txt").write_text(text, encoding="utf-8")
        written.append(str(config.out_dir / "summary.txt"))
        click.echo(text, nl=False)
    if "html" in out_formats:
        write_html_montage(report, lambda i: by_id[i], config.out_dir / "montage.html")
        written.append(str(config.out_dir / "montage.html"))
    present = report.families()
    if Family.FC in present and Family.COMBINED in present:
        fc_mean = report.grand_mean(Family.FC)
        combined_mean = report.grand_mean(Family.COMBINED)
        verdict = "holds" if combined_mean <= fc_mean else "does not hold"
        click.echo(f"observation: mean(combined)={combined_mean:.6f} vs "
                   f"mean(fc)={fc_mean:.6f}; combined <= fc {verdict}")
    click.echo("wrote " + ", ".join(written))


@main.command("inspect-significance")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--profile", "profile_name", default="vgg16", show_default=True)
@click.option("--dump", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Read activations from this dump instead of running a model.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--q", default=0.5, show_default=True)
@click.option("--channels", default="", help="Comma-separated last-block channels "
              "to export as binary maps.")
def inspect_significance(image, model, profile_name, dump, out_dir, q, channels) -> None:
    """Export significance count matrices (and channel maps) as PGM images."""
    config = PipelineConfig(out_dir=Path(out_dir), q=q,
                            families=(Family.COMBINED,), workers=1, k=5)
    if dump is None and model is None:
        raise click.UsageError("need --model or --dump")
    profile, runner = _load_runner(model, profile_name)
    if dump is not None:
        _, acts = read_dump(dump)
    else:
        acts = runner.activations_for_file(image)
    try:
        selected = [int(c) for c in channels.split(",") if c.strip()]
    except ValueError:
        raise click.UsageError(f"--channels must be comma-separated integers: {channels!r}")
    sig = compute_significance(acts, config.q, profile.config)
    config.out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(image).stem
    written = []
    for m in range(1, profile.config.n_blocks):
        out_file = config.out_dir / f"{stem}-z{m}.pgm"
        write_pgm(sig.count_matrix(m), out_file)
        written.append(out_file)
    last = profile.config.n_blocks
    for ch in selected:
        if not 0 <= ch < sig.last_block.shape[0]:
            raise click.UsageError(
                f"channel {ch} out of range 0..{sig.last_block.shape[0] - 1}"
            )
        out_file = config.out_dir / f"{stem}-b{last}-ch{ch}.pgm"
        write_pgm(sig.last_block[ch], out_file)
        written.append(out_file)
    for out_file in written:
        click.echo(str(out_file))


if __name__ == "__main__":
    main()
