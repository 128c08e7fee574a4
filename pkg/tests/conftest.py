import os
import tempfile

# Keep the logistic optimal-value cache out of the user's home during tests.
os.environ.setdefault("SADAM_CACHE_DIR", tempfile.mkdtemp(prefix="sadam-test-cache-"))

from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")
