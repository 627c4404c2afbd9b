from hypothesis import settings

# fixed example streams so test_output.txt is reproducible
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")
