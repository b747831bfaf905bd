import hypothesis

# Keep property-test scheduling reproducible across runs and machines.
hypothesis.settings.register_profile(
    "qsoc", hypothesis.settings(derandomize=True, deadline=None, max_examples=60))
hypothesis.settings.load_profile("qsoc")
