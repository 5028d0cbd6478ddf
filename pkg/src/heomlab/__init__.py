"""heomlab: non-Markovian decoherence of a driven three-level transmon.

The package simulates CPMG and Ramsey experiments on a qutrit coupled to a
1/f dephasing bath, using the hierarchical equations of motion (HEOM) with
an exponential-sum bath decomposition, and analyzes the resulting
decoherence scaling.

Modules
-------
bathkit     bath definition, Burkard decoherence integral, exponential fits
pulseforge  gate-to-waveform compilation (Standard and VPPU routes)
heomcore    HEOM and Lindblad solvers for the driven qutrit
experiments Ramsey/CPMG runners, fidelity metrics, filter functions
statlab     power-law fits, AICc selection, BCa and paired bootstrap
dacmetrics  quantization metrics: SQNR, spectral overlap, critical bit depth
cli         command-line orchestration with run manifests
"""

__version__ = "0.1.0"
