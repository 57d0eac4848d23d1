"""skylink: EAX-encrypted UAV links keyed by ECDH or ML-KEM-512, with benchmarks and an IDS."""

__version__ = "0.1.0"
