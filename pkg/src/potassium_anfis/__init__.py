"""ECG-based serum potassium estimation with grid-partition and FCM-initialised ANFIS."""

__version__ = "0.1.0"
