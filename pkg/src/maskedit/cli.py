"""Command-line interface.

Thin wrappers: each subcommand parses arguments, calls into the library or
service, and writes artifacts. Training commands operate on a scenes dataset
directory produced by ``maskedit scenes``.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from maskedit.containers import sha256_hex


def _load_models(checkpoint: str):
    from maskedit.generator import load_checkpoint

    generator, encoder = load_checkpoint(checkpoint)
    return generator, encoder


def _load_dataset_dir(directory: str):
    from maskedit.imageio import png_bytes_to_image, png_bytes_to_mask

    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    examples = []
    for entry in manifest["examples"]:
        image = png_bytes_to_image((root / entry["image"]).read_bytes())
        mask = png_bytes_to_mask((root / entry["mask"]).read_bytes())
        examples.append({"image": image, "mask": mask, "split": entry["split"],
                         "params": entry["params"], "attributes": entry["attributes"]})
    return manifest, examples


@click.group()
def main():
    """Segmentation-driven latent editing toolkit."""


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--n", default=200, show_default=True)
@click.option("--resolution", default=32, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--labeled-size", default=16, show_default=True)
def scenes(out, n, resolution, seed, labeled_size):
    """Generate the synthetic scenes dataset (PNG pairs + manifest)."""
    from maskedit.scenes import sample_dataset, write_dataset

    dataset = sample_dataset(n, resolution, seed, labeled_size=labeled_size)
    manifest = write_dataset(dataset, out)
    click.echo(f"wrote {n} scenes to {out} (manifest: {manifest})")


@main.command(name="train-gan")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", default=1600, show_default=True)
@click.option("--batch-size", default=12, show_default=True)
@click.option("--latent-dim", default=64, show_default=True)
@click.option("--style-layers", default=6, show_default=True)
@click.option("--seed", default=7, show_default=True)
def train_gan(data, out, steps, batch_size, latent_dim, style_layers, seed):
    """Train the toy joint generator on a scenes dataset directory."""
    from maskedit.generator import GeneratorConfig, train_toy_gan

    manifest, examples = _load_dataset_dir(data)
    resolution = manifest["resolution"]
    levels = max(2, int(np.log2(resolution / 4)) + 1)
    channels = tuple(max(16, 64 >> max(0, i - 1)) for i in range(levels))
    config = GeneratorConfig(latent_dim=latent_dim, num_style_layers=style_layers,
                             base_resolution=4, output_resolution=resolution,
                             channels_per_layer=channels,
                             num_labels=len(manifest["schema"]["names"]), rng_seed=seed)
    images = np.stack([e["image"] for e in examples])
    result = train_toy_gan(images, config, steps=steps, batch_size=batch_size,
                           holdout_images=images[: min(32, len(images))])
    result.generator.save_checkpoint(out)
    click.echo(f"saved checkpoint to {out} "
               f"(holdout disc accuracy {result.holdout_disc_accuracy})")


@main.command(name="train-encoder")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--steps", default=1500, show_default=True)
@click.option("--learning-rate", default=3e-5, show_default=True)
@click.option("--hard-dataset", is_flag=True, help="warm up on generator samples only")
def train_encoder_cmd(checkpoint, data, steps, learning_rate, hard_dataset):
    """Train the embedding encoder against a frozen generator."""
    from maskedit.embedding import EncoderConfig, train_encoder

    generator, encoder = _load_models(checkpoint)
    _, examples = _load_dataset_dir(data)
    images = np.stack([e["image"] for e in examples])
    config = EncoderConfig(learning_rate=learning_rate, hard_dataset=hard_dataset)
    result = train_encoder(generator, images, config, steps=steps, encoder=encoder)
    generator.save_checkpoint(checkpoint, encoder=result.encoder)
    click.echo(f"encoder trained for {steps} steps; checkpoint updated: {checkpoint}")


@main.command(name="train-head")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--embed-steps", default=300, show_default=True)
@click.option("--max-steps", default=20000, show_default=True)
@click.option("--target-accuracy", default=0.99, show_default=True)
def train_head_cmd(checkpoint, data, embed_steps, max_steps, target_accuracy):
    """Embed the labeled split and train the segmentation head on it."""
    from maskedit.embedding import RefinementConfig, embed_image
    from maskedit.seghead import HeadConfig, LabeledPair, train_head

    generator, encoder = _load_models(checkpoint)
    if encoder is None:
        raise click.ClickException("checkpoint has no encoder; run train-encoder first")
    _, examples = _load_dataset_dir(data)
    labeled = [e for e in examples if e["split"] == "labeled"]
    pairs = []
    for i, ex in enumerate(labeled):
        emb = embed_image(generator, encoder, ex["image"], RefinementConfig(steps=embed_steps))
        pairs.append(LabeledPair(image=ex["image"], mask=ex["mask"], w_plus=emb.w_plus))
        click.echo(f"embedded labeled pair {i + 1}/{len(labeled)} loss={emb.final_loss:.4f}")
    result = train_head(generator, pairs,
                        HeadConfig(max_steps=max_steps, target_train_accuracy=target_accuracy))
    generator.save_checkpoint(checkpoint, encoder=encoder)
    click.echo(f"head trained: {result.steps_run} steps, "
               f"train accuracy {result.final_train_accuracy:.4f}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="latent output (.egl)")
@click.option("--steps", default=500, show_default=True)
@click.option("--recon-out", type=click.Path(), default=None)
def embed(checkpoint, image_path, out, steps, recon_out):
    """Embed one image and write its latent (and optional reconstruction)."""
    from maskedit.embedding import RefinementConfig, embed_image, save_latent
    from maskedit.imageio import image_to_png_bytes, png_bytes_to_image

    generator, encoder = _load_models(checkpoint)
    png = Path(image_path).read_bytes()
    image = png_bytes_to_image(png)
    result = embed_image(generator, encoder, image, RefinementConfig(steps=steps))
    save_latent(out, result.w_plus, source_hash=sha256_hex(png))
    if recon_out:
        Path(recon_out).write_bytes(image_to_png_bytes(result.reconstruction))
    click.echo(f"embedded with final loss {result.final_loss:.5f}; latent: {out}")


@main.command(name="learn-edit")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--latent", "latent_path", required=True, type=click.Path(exists=True))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--edited-mask", required=True, type=click.Path(exists=True))
@click.option("--q-labels", required=True, help="comma-separated label ids")
@click.option("--name", required=True)
@click.option("--vectors-dir", default="vectors", show_default=True)
@click.option("--steps", default=100, show_default=True)
@click.option("--buffer-px", default=5, show_default=True)
def learn_edit(checkpoint, latent_path, image_path, edited_mask, q_labels, name,
               vectors_dir, steps, buffer_px):
    """Learn an editing vector from an edited mask and store it."""
    from maskedit.editing import EditingLossConfig, compute_edit_region, learn_editing_vector
    from maskedit.embedding import load_latent
    from maskedit.imageio import png_bytes_to_image, png_bytes_to_mask
    from maskedit.vectors import VectorRecord, save_vector

    generator, _ = _load_models(checkpoint)
    latent, _ = load_latent(latent_path)
    image = png_bytes_to_image(Path(image_path).read_bytes())
    y_edited = png_bytes_to_mask(Path(edited_mask).read_bytes())
    q = [int(s) for s in q_labels.split(",")]
    predicted = generator.predict_mask(latent)
    region = compute_edit_region(predicted, y_edited, q, buffer_px=buffer_px)
    if region.empty:
        raise click.ClickException("empty edit region")
    cfg = EditingLossConfig.learn_defaults(steps=steps)
    result = learn_editing_vector(generator, latent, image, y_edited, region,
                                  cfg=cfg, name=name)
    path = save_vector(VectorRecord(vector=result.vector,
                                    generator_checkpoint_hash=generator.weights_hash()),
                       vectors_dir)
    click.echo(f"learned vector {name!r}: loss {result.loss_trace[0]:.4f} -> "
               f"{min(result.loss_trace):.4f}; saved {path}")


@main.command(name="apply")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--latent", "latent_path", required=True, type=click.Path(exists=True))
@click.option("--vector", "vector_path", required=True, type=click.Path(exists=True))
@click.option("--scale", default=1.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--mask-out", type=click.Path(), default=None)
def apply_cmd(checkpoint, latent_path, vector_path, scale, out, mask_out):
    """Apply a stored editing vector at a scale and write the edited image."""
    from maskedit.editing import apply_editing_vector
    from maskedit.embedding import load_latent
    from maskedit.imageio import image_to_png_bytes, mask_to_png_bytes
    from maskedit.labels import LabelSchema
    from maskedit.scenes import SCENE_SCHEMA
    from maskedit.vectors import load_vector

    generator, _ = _load_models(checkpoint)
    latent, _ = load_latent(latent_path)
    record = load_vector(vector_path, active_generator_hash=generator.weights_hash())
    sample, _ = apply_editing_vector(generator, latent, record.vector, scale)
    Path(out).write_bytes(image_to_png_bytes(sample.image))
    if mask_out and sample.mask is not None:
        n = generator.config.num_labels
        schema = SCENE_SCHEMA if n == SCENE_SCHEMA.num_labels else LabelSchema.generic(n)
        Path(mask_out).write_bytes(mask_to_png_bytes(sample.mask, schema))
    click.echo(f"applied {record.vector.name!r} at scale {scale}; image: {out}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--latent", "latent_path", required=True, type=click.Path(exists=True))
@click.option("--vector", "vector_path", required=True, type=click.Path(exists=True))
@click.option("--scale", default=1.0, show_default=True)
@click.option("--steps", default=30, show_default=True)
@click.option("--out", required=True, type=click.Path())
def refine(checkpoint, latent_path, vector_path, scale, steps, out):
    """Apply a vector with self-supervised refinement."""
    from maskedit.editing import refine_edit
    from maskedit.embedding import load_latent
    from maskedit.imageio import image_to_png_bytes
    from maskedit.vectors import load_vector

    generator, _ = _load_models(checkpoint)
    latent, _ = load_latent(latent_path)
    record = load_vector(vector_path, active_generator_hash=generator.weights_hash())
    result = refine_edit(generator, latent, record.vector, scale, steps=steps)
    Path(out).write_bytes(image_to_png_bytes(result.sample.image))
    trace = result.loss_trace
    click.echo(f"refined over {steps} steps: loss {trace[0]:.4f} -> {min(trace):.4f}; "
               f"image: {out}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--vector", "vector_path", required=True, type=click.Path(exists=True))
@click.option("--scales", default="0.7,1,1.3,1.5,1.7", show_default=True)
@click.option("--refinement-steps", default="0", show_default=True,
              help="comma-separated refinement depths, e.g. 0,10,30,60")
@click.option("--n-test", default=8, show_default=True)
@click.option("--seed", default=100, show_default=True)
@click.option("--out-csv", required=True, type=click.Path())
@click.option("--out-json", type=click.Path(), default=None)
def bench(checkpoint, vector_path, scales, refinement_steps, n_test, seed, out_csv, out_json):
    """Scale-sweep benchmark of a vector on generator samples."""
    from maskedit.generator import sample_latent
    from maskedit.metrics import image_features, reports_to_csv, reports_to_json, run_benchmark
    from maskedit.vectors import load_vector

    generator, _ = _load_models(checkpoint)
    record = load_vector(vector_path, active_generator_hash=generator.weights_hash())
    scale_list = [float(s) for s in scales.split(",")]
    refine_list = [int(s) for s in refinement_steps.split(",")]
    latents = [generator.map_to_w_plus(sample_latent(seed + i, generator.config.latent_dim))
               for i in range(n_test)]
    originals = [generator.synthesize(w).image for w in latents]
    reference = image_features(originals)
    reports = run_benchmark(generator, record.vector, scale_list, latents, reference,
                            refinement_steps=refine_list, originals=originals)
    reports_to_csv(reports, out_csv)
    if out_json:
        Path(out_json).write_text(reports_to_json(reports))
    click.echo(f"benchmark written: {out_csv}")


@main.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="output plot PNG")
@click.option("--kind", type=click.Choice(["scale-fid", "attr-id"]), default="scale-fid",
              show_default=True)
def plot(csv_path, out, kind):
    """Render benchmark CSV into a plot (scale vs FID, or attribute vs ID)."""
    import csv as csvmod

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = list(csvmod.DictReader(open(csv_path)))
    by_refine: dict[int, list[dict]] = {}
    for row in rows:
        by_refine.setdefault(int(row["refinement_steps"]), []).append(row)
    fig, ax = plt.subplots(figsize=(5, 4))
    for steps, group in sorted(by_refine.items()):
        group.sort(key=lambda r: float(r["scale"]))
        if kind == "scale-fid":
            ax.plot([float(r["scale"]) for r in group], [float(r["fid"]) for r in group],
                    marker="o", label=f"refine {steps}")
            ax.set_xlabel("editing scale")
            ax.set_ylabel("FID vs reference")
        else:
            ax.plot([float(r["attribute_accuracy"]) for r in group],
                    [float(r["id_score"]) for r in group],
                    marker="o", label=f"refine {steps}")
            ax.set_xlabel("attribute accuracy")
            ax.set_ylabel("identity score")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    click.echo(f"plot written: {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the HTTP service (config file + MASKEDIT_* env overrides)."""
    import uvicorn

    from maskedit.service import ServiceConfig, create_app

    config = ServiceConfig.load(config_path)
    if host:
        config.host = host
    if port:
        config.port = port
    uvicorn.run(create_app(config), host=config.host, port=config.port)


if __name__ == "__main__":
    main()
