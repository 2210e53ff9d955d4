"""
Services module - profiling, cost model, validation suites, synthetic data and file I/O
"""
