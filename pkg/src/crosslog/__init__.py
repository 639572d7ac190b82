"""Zero-label cross-system log anomaly detection.

Logs are parsed into templates, embedded in one space shared by all systems,
and a domain-adversarial detector is meta-trained on a labeled source system
plus an unlabeled target system.
"""

__version__ = "0.1.0"
