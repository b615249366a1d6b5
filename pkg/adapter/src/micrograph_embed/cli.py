"""CLI entry points for embedding extraction."""

from __future__ import annotations

import click

from .backends import BackendError
from .extract import ExtractionJob, JobError, extract, extract_criteria, load_manifest

backend_option = click.option(
    "--backend",
    type=click.Choice(["auto", "clip", "flava", "hashed"]),
    default="auto",
    show_default=True,
    help="auto wraps the checkpoint matching --model; hashed is the offline stand-in.",
)


@click.group()
def main():
    """Extract L2-normalized embeddings into the interchange format."""


@main.command("extract")
@click.option("--model", type=click.Choice(["clip", "flava"]), required=True)
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON list of {id, image} / {id, text} entries.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--id-prefix", default="", help="Prefix for emitted ids (multi-model stores).")
@backend_option
def extract_cmd(model, manifest, out, id_prefix, backend):
    """Embed a manifest of images and/or prompts."""
    try:
        job = ExtractionJob(
            model=model,
            inputs=load_manifest(manifest),
            output_path=out,
            backend=backend,
            id_prefix=id_prefix,
        )
        count = extract(job)
    except (JobError, BackendError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{count} embeddings written to {out}")


@main.command("extract-criteria")
@click.option("--criteria", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Knowledge JSON carrying criteria[].")
@click.option("--variant", type=click.Choice(["plain", "color", "both"]), default="plain",
              show_default=True)
@click.option("--model", type=click.Choice(["clip", "flava"]), default="clip", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--id-prefix", default="")
@backend_option
def extract_criteria_cmd(criteria, variant, model, out, id_prefix, backend):
    """Embed positive/negative prompts for every stored criterion."""
    try:
        count = extract_criteria(
            criteria, variant, model, out, backend=backend, id_prefix=id_prefix
        )
    except (JobError, BackendError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{count} prompt embeddings written to {out}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8078, show_default=True)
@backend_option
def serve_cmd(host, port, backend):
    """HTTP micro-endpoint: POST /extract with {model, items}."""
    try:
        from .server import create_app
    except ImportError as exc:
        raise click.ClickException(f"serving needs fastapi+uvicorn: {exc}")
    import uvicorn

    uvicorn.run(create_app(default_backend=backend), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
