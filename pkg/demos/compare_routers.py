"""Run every routing algorithm on one noisy network and tabulate the results."""
from hqnet.engine import ROUTING_ALGORITHMS, EngineConfig, run
from hqnet.noise import EnvParams
from hqnet.topology import build_hierarchical_cellular

net = build_hierarchical_cellular(2, env=EnvParams(0.1, 0.1, 0.01, 1e-3))
print(f"{'router':8s} {'fidelity':>9s} {'qps':>8s} {'pairs':>6s} {'route ms':>9s}")
for alg in ROUTING_ALGORITHMS:
    m = run(net, EngineConfig(routing=alg, sessions=200, trace=False,
                              calibration_probes=50), seed=3).metrics
    print(f"{alg:8s} {m.fidelity_mean:9.4f} {m.throughput_qps:8.1f} "
          f"{m.pairs_consumed_mean:6.2f} {m.route_time_ms_mean:9.4f}")
