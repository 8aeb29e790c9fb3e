"""SF-aware LoRa RSSI fingerprinting: radio-map simulation, a
window-shrinking deep-Q localization agent, supervised baselines, and a
benchmarking harness."""

__version__ = "0.1.0"
