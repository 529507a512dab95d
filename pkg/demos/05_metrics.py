"""Day/night-trained feature metrics.

Trains the 2-D feature extractor as a day/night classifier, certifies it
on a held-out split, and compares feature distances: two halves of the
day set should be close, day vs night far apart. KID comes along for
free from the same features.
"""

import warnings

from eventsb.events import SceneConfig, bin_events, generate_day_scene, generate_night_scene
from eventsb.metrics import event_fid, kid, train_extractor

warnings.filterwarnings("ignore", message="only .* samples")


def scenes(n, domain, start):
    out = []
    for i in range(n):
        cfg = SceneConfig(seed=start + i)
        stream = generate_day_scene(cfg) if domain == "day" else generate_night_scene(cfg)
        h = bin_events(stream, 3)
        h.domain_tag = domain
        out.append(h)
    return out


day = scenes(120, "day", 0)
night = scenes(120, "night", 5000)

extractor, fingerprint = train_extractor(day, night, arch="fid", seed=0)
print(f"extractor certified: accuracy {fingerprint.validation_accuracy:.3f}, "
      f"fingerprint {fingerprint.digest}")

within = event_fid(extractor, day[:40], day[40:80])
across = event_fid(extractor, day[:40], night[:40])
print(f"event-FID  day split vs day split: {within:8.3f}")
print(f"event-FID  day vs night:           {across:8.3f}  ({across / within:.0f}x larger)")
print(f"KID (x100) day vs night:           {kid(extractor, day[:40], night[:40]):8.3f}")
