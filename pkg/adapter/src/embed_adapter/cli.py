"""export-vectors command line entry point."""

from __future__ import annotations

import sys

import click

from .encoders import EncoderError
from .export import ExportError, export_vectors


@click.command("export-vectors")
@click.option("--mentions", type=click.Path(exists=True), required=True,
              help="Mention corpus (JSONL).")
@click.option("--model", required=True,
              help="Encoder id: a HuggingFace model id, or hash://<dim>.")
@click.option("--pooling", type=click.Choice(["cls", "mean"]), required=True)
@click.option("--input", "input_kind", type=click.Choice(["surface", "contextual"]),
              required=True)
@click.option("--context-chars", type=int, default=256, show_default=True,
              help="Characters of document context kept on each side (contextual input).")
@click.option("--out", type=click.Path(), required=True)
def export(mentions, model, pooling, input_kind, context_chars, out):
    """Encode every mention and write an MFV1 vector file plus manifest."""
    manifest = export_vectors(
        mentions, model, pooling, input_kind, out, context_chars=context_chars
    )
    click.echo(
        f"{out}: {manifest.entries} vectors, dim {manifest.dim} "
        f"({manifest.model}, {manifest.pooling}/{manifest.input})"
    )


def main(argv=None) -> int:
    try:
        export.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:
        return exc.code or 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (EncoderError, ExportError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
