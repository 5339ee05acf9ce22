"""Teleport a few random qubits across a noiseless four-repeater path and print the trace."""
from hqnet.engine import EngineConfig, run
from hqnet.topology import build_hierarchical_cellular

net = build_hierarchical_cellular(2)
result = run(net, EngineConfig(sessions=3, oracle=True), seed=1)
for line in result.trace:
    print(line)
for s in result.sessions:
    print(f"{s.id}: {' -> '.join(s.path.devices)} fidelity={s.fidelity:.12f}")
