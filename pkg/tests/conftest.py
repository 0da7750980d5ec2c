from hypothesis import settings

# deterministic example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")
