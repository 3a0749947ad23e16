"""Start a demo loop service for the UI: a small corpus where every third
document mentions months ('january', 'snow', ...).

    python3 scripts/demo_server.py [port]
"""

import sys
import tempfile

from labelloop import Engine, LoopService, RawStore, import_items
from labelloop.server import make_server

port = int(sys.argv[1]) if len(sys.argv) > 1 else 8351
workdir = tempfile.mkdtemp(prefix="labelloop-ui-demo-")

records = []
for i in range(600):
    seasonal = i % 3 == 0
    records.append(
        {
            "external_id": f"demo-{i}",
            "url": f"http://demo.test/{i}",
            "title": f"demo page {i}",
            "body_text": (
                f"the cat sat on mat number {i}"
                + (" january snow february winter" if seasonal else " summer traffic news")
            ),
        }
    )
import_items(records, workdir, "demo", bucket_capacity=100)
engine = Engine(RawStore.open(workdir, "demo"), shard_count=3)
service = LoopService(engine, workdir + "/sessions")
server = make_server(service, port=port)
print(f"demo loop service on http://127.0.0.1:{port} ({engine.row_count} rows)")
try:
    server.serve_forever()
except KeyboardInterrupt:
    server.shutdown()
