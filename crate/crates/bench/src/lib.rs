// Benchmarks live in benches/; see the workspace README.
