"""
Training diagnoser agents and reading a fused verdict
=====================================================

Four leaf agents each watch one feature (request character counts,
request tokens, session character counts, session error ratio).  Inner
nodes fuse their children's masses; the root's decision is the verdict.
This walks one benign and one hostile request through that graph.
"""

from driftguard.config import from_dict
from driftguard.engine import train_agents
from driftguard.eval_harness import generate_bootstrap, labeled_records
from driftguard.fusion_graph import diagnose_request
from driftguard.log_ingest import Session, parse_line

config = from_dict(None)

# Bootstrap corpus: synthetic benign browsing plus replayed scanner
# sessions, each line tagged with its ground truth for training.
lines, labels = generate_bootstrap(seed=11, n_normal=700, n_attack_sessions=10)
agents = train_agents(labeled_records(zip(lines, labels)), config)

for agent_id, agent in sorted(agents.items()):
    print(f"{agent_id:14s} feature={agent.model.feature_kind:19s} "
          f"precision={agent.model.precision:.3f}")
print()


def verdict_for(line):
    record = parse_line(line)
    session = Session(record.ip)
    session.append(record, record.timestamp)
    return diagnose_request(config.graph, agents, record, session)


BENIGN = ('198.18.0.9 - - [12/Apr/2006:08:05:43 -0300] '
          '"GET /catalog/item.php?id=210 HTTP/1.1" 200 4120 "-" "Mozilla/5.0"')
HOSTILE = ('10.200.0.7 - - [12/Apr/2006:08:05:43 -0300] '
           '"GET /cgi-bin/mrtg.cgi?cfg=/../../../../../../etc/passwd HTTP/1.0" '
           '404 289 "-" "Mozilla/4.75"')

for tag, line in (("benign", BENIGN), ("hostile", HOSTILE)):
    trace = verdict_for(line)
    print(f"--- {tag} request ---")
    for node in ("request_char", "request_token", "session_char",
                 "session_error", "request_view", "session_view", "root"):
        d = trace.per_node[node]
        print(f"  {node:14s} N={d.m_n:.3f} I={d.m_i:.3f} U={d.m_u:.3f}")
    print(f"  verdict: {trace.verdict.label} "
          f"(belief {trace.verdict.belief:.3f})")
    print()
