import pytest

from labelloop import Engine, RawStore, import_items

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_records(n, month_every=3):
    """Tiny synthetic corpus: every `month_every`-th doc mentions months."""
    records = []
    for i in range(n):
        extra = " january snow february" if i % month_every == 0 else ""
        records.append(
            {
                "external_id": f"ext-{i}",
                "url": f"http://example.test/{i}",
                "title": f"doc {i}",
                "body_text": f"the cat sat on mat number {i}{extra}",
            }
        )
    return records


@pytest.fixture
def small_store(tmp_path):
    records = make_records(30)
    import_items(records, tmp_path, "small", bucket_capacity=5)
    return RawStore.open(tmp_path, "small"), records


@pytest.fixture
def small_engine(small_store):
    store, records = small_store
    return Engine(store, shard_count=3), records
