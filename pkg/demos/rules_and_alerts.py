"""
Rules, validation and the event engine
======================================

Load the bundled rule table, check it, and push a synthetic stream through the engine.
"""

from aqcep.aqi import default_table
from aqcep.cep import CepEngine
from aqcep.rules import bundled_rules, parse_rules, print_rules, validate_ruleset
from aqcep.synthetic import synthetic_events

# Rules are plain text. Keywords are case-insensitive and '#' starts a comment.
text = """
# one hand-written rule
rule dusty when PM10 > 250 and PM25 >= 90 then category Poor severity 3
"""
print(print_rules(parse_rules(text)), end="")

# The inverted table contains a rule whose PM2.5 bounds exclude each other.
# Validation flags it as an error; band mismatches and overlaps are warnings.
for d in validate_ruleset(bundled_rules("standard_inverted.rules"), default_table()):
    print(d)

# The corrected table drives the engine.
rules = bundled_rules("standard.rules")
print()
print(print_rules(rules), end="")

events = synthetic_events(2000, seed=1)
alerts = []
engine = CepEngine()
engine.deploy_rules(rules)
m = engine.run_stream(events, alerts.append)
print(f"\n{m.events_processed} events, {m.alerts_emitted} alerts in {m.process_duration * 1e3:.1f} ms")
for name, count in m.per_rule_match_count.items():
    print(f"  {name}: {count}")

a = alerts[0]
print(f"first alert: {a.rule_name} on {a.station} {a.timestamp:%Y-%m-%d} -> {a.category.label}")
print("advisory:", a.advisory)
