"""Synthetic day and night event scenes.

Generates one scene per domain, voxelizes both into 3-bin polarity
histograms, prints the summary statistics that separate the domains, and
saves per-bin red/blue renderings next to this script.
"""

from pathlib import Path

from eventsb.events import (
    SceneConfig,
    bin_events,
    generate_day_scene,
    generate_night_scene,
    polarity_imbalance,
)
from eventsb.viz import render_histogram, save_image

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

cfg = SceneConfig(resolution=(64, 64), n_shapes=3, seed=2)
day = generate_day_scene(cfg)
night = generate_night_scene(cfg)

print(f"day scene:   {len(day):5d} events")
print(f"night scene: {len(night):5d} events (adds light bursts, noise, jitter)")

for name, stream in (("day", day), ("night", night)):
    hist = bin_events(stream, bins=3)
    hist.domain_tag = name if name != "day" else "day"
    occupancy = (hist.data > 0).mean()
    print(
        f"{name:5s}: occupancy {occupancy:.3f}, "
        f"polarity imbalance {polarity_imbalance(hist):.3f}"
    )
    for b, img in enumerate(render_histogram(hist)):
        path = out_dir / f"{name}_bin{b}.png"
        save_image(img, path)
        print(f"       wrote {path}")
