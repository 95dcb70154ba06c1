"""Behavioral emulation of a dual-DSP VME instrumentation board.

Modules: ``signal`` (test-signal synthesis and SNR), ``adaptive`` (LMS/NLMS
filters), ``dualcore`` (DPRAM and the two-core filter/update pipeline),
``board`` (converters, watchdog, trip logic, register map), ``vme`` (bus
slave), ``apps`` (BCM and BPM demos) and ``cli``.
"""
__version__ = "0.1.0"
