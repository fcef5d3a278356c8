"""
Parsing access logs and rebuilding client sessions
==================================================

The ingest layer turns raw combined-format lines into typed records,
drops traffic that carries no signal (static assets, crawlers), and
groups what remains into per-IP sessions with an inactivity window.
"""

from driftguard.log_ingest import (
    FilterConfig,
    ParseStats,
    SessionStore,
    filter_record,
    iter_records,
    parse_line,
    percent_decode,
)

# A small stream: two browsing requests, a stylesheet, a crawler hit,
# a suspicious probe, and one truncated line that should not parse.
LINES = [
    '10.0.0.5 - - [12/Apr/2006:08:05:43 -0300] "GET /index.pl HTTP/1.1" 200 2891 '
    '"-" "Mozilla/5.0"',
    '10.0.0.5 - - [12/Apr/2006:08:06:01 -0300] "GET /scripts/access.pl?user=johndoe '
    'HTTP/1.1" 200 512 "-" "Mozilla/5.0"',
    '10.0.0.5 - - [12/Apr/2006:08:06:02 -0300] "GET /styles/site.css HTTP/1.1" 200 901 '
    '"-" "Mozilla/5.0"',
    '66.249.0.9 - - [12/Apr/2006:08:06:10 -0300] "GET /index.pl HTTP/1.1" 200 2891 '
    '"-" "Googlebot/2.1 (+http://www.google.com/bot.html)"',
    '192.168.0.1 - - [12/Apr/2006:09:00:00 -0300] "GET /cgi-bin/mrtg.cgi?cfg='
    '/../../../../../../winnt/win.ini HTTP/1.0" 404 289',
    'garbage that is not a log line',
]

# One line in detail.  The raw URL is preserved byte for byte (to_line
# round-trips exactly); the decoded form is what features operate on.
record = parse_line(LINES[4])
print("ip:        ", record.ip)
print("method:    ", record.method)
print("raw url:   ", record.raw_url)
print("status:    ", record.status)
print("round trip:", record.to_line() == LINES[4])
print()

# Percent-decoding happens once, at parse time.  Double-encoded input
# is unwrapped a single level, so "%252e" becomes "%2e", not ".".
print("decoded once: ", percent_decode("/scripts/..%c1%1c../winnt/system32/cmd.exe"))
print("double-encoded:", percent_decode("/a%252e%252e/passwd"))
print()

# Streaming parse with accounting: the malformed line is counted, not
# raised, because one bad line must never stop a tail -f style feed.
stats = ParseStats()
records = list(iter_records(LINES, stats))
print(f"parsed {stats.parsed} lines, skipped {stats.malformed} malformed")

# Filtering: the stylesheet and the crawler carry no decision signal.
rules = FilterConfig()
for rec in records:
    reason = filter_record(rec, rules)
    if reason:
        print(f"dropped {rec.ip} {rec.decoded_url[:40]:40s} ({reason})")
kept = [r for r in records if filter_record(r, rules) is None]
print()

# Sessions: same IP within the inactivity window lands in one session.
# A tight window here forces the probe (an hour later) into its own.
store = SessionStore(window=1800.0)
for rec in kept:
    session, created = store.add(rec)
    marker = "new session" if created else "appended"
    print(f"{rec.ip:12s} -> {marker} (len={session.n_records})")

print()
for ip, session in store.sessions.items():
    ratio = session.error_count / session.n_records
    print(f"session {ip}: {session.n_records} requests, error ratio {ratio:.2f}")
