"""Regenerate the checked-in test fixtures.

    python3 tools/make_fixtures.py [--out tests/fixtures]

Everything is derived from fixed seeds, so running this twice gives
identical bytes.
"""

from __future__ import annotations

import argparse
import math
import random
from pathlib import Path

import numpy as np

from knobrag.corpus import DebugQuestion, DocKind, Document, atomic_write_text, save_corpus
from knobrag.knobspace import KnobSpec, KnobValue, format_registry_line, load_registry
from knobrag.reasoner.backends import save_transcript
from knobrag.synthbench import SplitMix64, record_transcript, two_phase_responder
from knobrag.telemetry.series import TelemetrySeries, write_series_csv

HERE = Path(__file__).resolve().parent
NAMES = HERE / "mysql57_knobs.txt"
U64 = 18446744073709551615

# ---------------------------------------------------------------------------
# registry

BOOLEANS = {
    "autocommit", "automatic_sp_privileges", "avoid_temporal_upgrade", "big_tables",
    "binlog_direct_non_transactional_updates", "binlog_gtid_simple_recovery", "binlog_order_commits",
    "binlog_rows_query_log_events", "check_proxy_users", "core_file", "disconnect_on_expired_password",
    "end_markers_in_json", "explicit_defaults_for_timestamp", "flush", "foreign_key_checks", "general_log",
    "innodb_adaptive_flushing", "innodb_adaptive_hash_index", "innodb_api_disable_rowlock",
    "innodb_api_enable_binlog", "innodb_api_enable_mdl", "innodb_buffer_pool_dump_at_shutdown",
    "innodb_buffer_pool_dump_now", "innodb_buffer_pool_load_abort", "innodb_buffer_pool_load_at_startup",
    "innodb_buffer_pool_load_now", "innodb_cmp_per_index_enabled", "innodb_deadlock_detect",
    "innodb_disable_sort_file_cache", "innodb_doublewrite", "innodb_file_format_check",
    "innodb_file_per_table", "innodb_flush_sync", "innodb_force_load_corrupted",
    "innodb_ft_enable_diag_print", "innodb_ft_enable_stopword", "innodb_large_prefix",
    "innodb_locks_unsafe_for_binlog", "innodb_log_checksums", "innodb_log_compressed_pages",
    "innodb_numa_interleave", "innodb_optimize_fulltext_only", "innodb_print_all_deadlocks",
    "innodb_random_read_ahead", "innodb_read_only", "innodb_rollback_on_timeout",
    "innodb_stats_auto_recalc", "innodb_stats_include_delete_marked", "innodb_stats_on_metadata",
    "innodb_stats_persistent", "innodb_status_output", "innodb_status_output_locks", "innodb_strict_mode",
    "innodb_support_xa", "innodb_table_locks", "innodb_undo_log_truncate", "innodb_use_native_aio",
    "keep_files_on_create", "large_files_support", "large_pages", "local_infile", "locked_in_memory",
    "log_bin", "log_bin_trust_function_creators", "log_bin_use_v1_row_events",
    "log_builtin_as_identified_by_password", "log_queries_not_using_indexes", "log_slave_updates",
    "log_slow_admin_statements", "log_slow_slave_statements", "log_statements_unsafe_for_binlog",
    "log_syslog", "log_syslog_include_pid", "low_priority_updates", "lower_case_file_system",
    "master_verify_checksum", "myisam_use_mmap", "mysql_native_password_proxy_users", "named_pipe", "new",
    "offline_mode", "old", "old_alter_table", "optimizer_trace", "performance_schema", "profiling",
    "pseudo_slave_mode", "query_cache_wlock_invalidate", "read_only", "relay_log_purge",
    "relay_log_recovery", "require_secure_transport", "secure_auth",
    "sha256_password_auto_generate_rsa_keys", "sha256_password_proxy_users", "shared_memory",
    "show_compatibility_56", "show_create_table_verbosity", "show_old_temporals", "skip_external_locking",
    "skip_name_resolve", "skip_networking", "skip_show_database", "slave_allow_batching",
    "slave_compressed_protocol", "slave_preserve_commit_order", "slave_sql_verify_checksum", "slow_query_log",
    "sql_auto_is_null", "sql_big_selects", "sql_buffer_result", "sql_log_bin", "sql_log_off", "sql_notes",
    "sql_quote_show_create", "sql_safe_updates", "sql_warnings", "super_read_only", "sync_frm",
    "transaction_allow_batching", "transaction_read_only", "tx_read_only", "unique_checks",
    "group_replication_start_on_boot",
    "group_replication_bootstrap_group", "group_replication_single_primary_mode",
    "group_replication_enforce_update_everywhere_checks", "group_replication_recovery_use_ssl",
    "group_replication_allow_local_disjoint_gtids_join", "group_replication_allow_local_lower_version_join",
    "rpl_semi_sync_master_enabled", "rpl_semi_sync_master_wait_no_slave", "rpl_semi_sync_slave_enabled",
    "daemon_memcached_enable_binlog", "session_track_schema", "session_track_state_change",
    "have_statement_timeout", "ignore_builtin_innodb", "validate_password_check_user_name",
}

ENUMS = {
    "binlog_checksum": ("NONE", "CRC32"),
    "binlog_error_action": ("ABORT_SERVER", "IGNORE_ERROR"),
    "binlog_format": ("ROW", "STATEMENT", "MIXED"),
    "binlog_row_image": ("FULL", "MINIMAL", "NOBLOB"),
    "binlog_transaction_dependency_tracking": ("COMMIT_ORDER", "WRITESET", "WRITESET_SESSION"),
    "block_encryption_mode": ("aes-128-ecb", "aes-192-ecb", "aes-256-ecb", "aes-128-cbc", "aes-256-cbc"),
    "completion_type": ("NO_CHAIN", "CHAIN", "RELEASE"),
    "concurrent_insert": ("NEVER", "AUTO", "ALWAYS"),
    "default_authentication_plugin": ("mysql_native_password", "sha256_password"),
    "default_storage_engine": ("InnoDB", "MyISAM", "MEMORY"),
    "default_tmp_storage_engine": ("InnoDB", "MyISAM", "MEMORY"),
    "delay_key_write": ("OFF", "ON", "ALL"),
    "enforce_gtid_consistency": ("OFF", "ON", "WARN"),
    "event_scheduler": ("OFF", "ON", "DISABLED"),
    "gtid_mode": ("OFF", "OFF_PERMISSIVE", "ON_PERMISSIVE", "ON"),
    "group_replication_exit_state_action": ("ABORT_SERVER", "READ_ONLY"),
    "group_replication_flow_control_mode": ("QUOTA", "DISABLED"),
    "group_replication_ssl_mode": ("DISABLED", "REQUIRED", "VERIFY_CA", "VERIFY_IDENTITY"),
    "have_compress": ("YES", "NO"),
    "have_crypt": ("YES", "NO"),
    "have_dynamic_loading": ("YES", "NO"),
    "have_geometry": ("YES", "NO"),
    "have_openssl": ("YES", "NO", "DISABLED"),
    "have_profiling": ("YES", "NO"),
    "have_query_cache": ("YES", "NO"),
    "have_rtree_keys": ("YES", "NO"),
    "have_ssl": ("YES", "NO", "DISABLED"),
    "have_symlink": ("YES", "NO", "DISABLED"),
    "innodb_change_buffering": ("none", "inserts", "deletes", "changes", "purges", "all"),
    "innodb_checksum_algorithm": ("crc32", "strict_crc32", "innodb", "strict_innodb", "none", "strict_none"),
    "innodb_default_row_format": ("DYNAMIC", "COMPACT", "REDUNDANT"),
    "innodb_file_format": ("Antelope", "Barracuda"),
    "innodb_file_format_max": ("Antelope", "Barracuda"),
    "innodb_flush_log_at_trx_commit": ("0", "1", "2"),
    "innodb_flush_method": ("fsync", "O_DSYNC", "littlesync", "nosync", "O_DIRECT", "O_DIRECT_NO_FSYNC"),
    "innodb_stats_method": ("nulls_equal", "nulls_unequal", "nulls_ignored"),
    "internal_tmp_disk_storage_engine": ("InnoDB", "MyISAM"),
    "log_error_verbosity": ("1", "2", "3"),
    "log_output": ("FILE", "TABLE", "NONE"),
    "log_timestamps": ("UTC", "SYSTEM"),
    "master_info_repository": ("FILE", "TABLE"),
    "myisam_recover_options": ("OFF", "DEFAULT", "BACKUP", "FORCE", "QUICK"),
    "myisam_stats_method": ("nulls_equal", "nulls_unequal", "nulls_ignored"),
    "query_cache_type": ("OFF", "ON", "DEMAND"),
    "rbr_exec_mode": ("STRICT", "IDEMPOTENT"),
    "relay_log_info_repository": ("FILE", "TABLE"),
    "rpl_semi_sync_master_wait_point": ("AFTER_SYNC", "AFTER_COMMIT"),
    "session_track_gtids": ("OFF", "OWN_GTID", "ALL_GTIDS"),
    "session_track_transaction_info": ("OFF", "STATE", "CHARACTERISTICS"),
    "slave_exec_mode": ("STRICT", "IDEMPOTENT"),
    "slave_parallel_type": ("DATABASE", "LOGICAL_CLOCK"),
    "thread_handling": ("no-threads", "one-thread-per-connection", "loaded-dynamically"),
    "transaction_isolation": ("READ-UNCOMMITTED", "READ-COMMITTED", "REPEATABLE-READ", "SERIALIZABLE"),
    "transaction_write_set_extraction": ("OFF", "MURMUR32", "XXHASH64"),
    "tx_isolation": ("READ-UNCOMMITTED", "READ-COMMITTED", "REPEATABLE-READ", "SERIALIZABLE"),
    "updatable_views_with_limit": ("YES", "NO"),
    "validate_password_policy": ("LOW", "MEDIUM", "STRONG"),
    "innodb_autoinc_lock_mode": ("0", "1", "2"),
    "innodb_fast_shutdown": ("0", "1", "2"),
}

DEFAULTS = {
    "autocommit": "1", "foreign_key_checks": "1", "unique_checks": "1", "binlog_format": "ROW",
    "innodb_flush_log_at_trx_commit": "1", "innodb_file_per_table": "1", "transaction_isolation": "REPEATABLE-READ",
    "sync_binlog": "1", "query_cache_type": "OFF", "slow_query_log": "0", "general_log": "0",
}

# (min, max, default) for integers with a documented range
INTEGERS = {
    "auto_increment_increment": (1, 65535, 1), "auto_increment_offset": (1, 65535, 1),
    "back_log": (1, 65535, 80), "binlog_cache_size": (4096, U64, 32768),
    "bulk_insert_buffer_size": (0, U64, 8388608), "connect_timeout": (2, 31536000, 10),
    "expire_logs_days": (0, 99, 0), "group_concat_max_len": (4, U64, 1024),
    "innodb_buffer_pool_instances": (1, 64, 8), "innodb_buffer_pool_size": (5242880, U64, 134217728),
    "innodb_io_capacity": (100, U64, 200), "innodb_io_capacity_max": (100, U64, 2000),
    "innodb_lock_wait_timeout": (1, 1073741824, 50), "innodb_log_buffer_size": (1048576, 4294967295, 16777216),
    "innodb_log_file_size": (4194304, 549755813888, 50331648), "innodb_log_files_in_group": (2, 100, 2),
    "innodb_open_files": (10, 4294967295, 2000), "innodb_purge_threads": (1, 32, 4),
    "innodb_read_io_threads": (1, 64, 4), "innodb_write_io_threads": (1, 64, 4),
    "innodb_thread_concurrency": (0, 1000, 0), "interactive_timeout": (1, 31536000, 28800),
    "join_buffer_size": (128, 4294967295, 262144), "key_buffer_size": (8, U64, 8388608),
    "lock_wait_timeout": (1, 31536000, 31536000), "max_allowed_packet": (1024, 1073741824, 4194304),
    "max_binlog_size": (4096, 1073741824, 1073741824), "max_connect_errors": (1, U64, 100),
    "max_connections": (1, 100000, 151), "max_heap_table_size": (16384, U64, 16777216),
    "max_user_connections": (0, 4294967295, 0), "net_buffer_length": (1024, 1048576, 16384),
    "net_read_timeout": (1, 31536000, 30), "net_write_timeout": (1, 31536000, 60),
    "open_files_limit": (0, 4294967295, 5000), "port": (0, 65535, 3306),
    "query_cache_size": (0, U64, 1048576), "read_buffer_size": (8192, 2147479552, 131072),
    "read_rnd_buffer_size": (1, 2147483647, 262144), "server_id": (0, 4294967295, 0),
    "slave_parallel_workers": (0, 1024, 0), "sort_buffer_size": (32768, U64, 262144),
    "sync_binlog": (0, 4294967295, 1), "table_definition_cache": (400, 524288, 1400),
    "table_open_cache": (1, 524288, 2000), "table_open_cache_instances": (1, 64, 16),
    "thread_cache_size": (0, 16384, 9), "thread_stack": (131072, U64, 262144),
    "tmp_table_size": (1024, U64, 16777216), "wait_timeout": (1, 31536000, 28800),
}

REALS = {
    "long_query_time": (0, 31536000, 10), "innodb_max_dirty_pages_pct": (0, 99.999, 75),
    "innodb_max_dirty_pages_pct_lwm": (0, 99.999, 0),
}

STRING_HINTS = ("dir", "file", "path", "socket", "host", "user", "password", "plugin", "ssl_", "format",
                "version", "name", "_tag", "uuid", "mode", "switch", "init_", "charset", "character_set",
                "collation", "lc_", "time_zone", "ft_boolean_syntax", "license", "relay_log", "log_bin",
                "log_error", "gtid_", "_address", "_seeds", "whitelist", "members", "_option", "_data",
                "optimizer_trace_features", "session_track_system_variables", "slave_skip_errors",
                "slave_type_conversions", "slave_rows_search_algorithms", "tls_version", "ignore_db_dirs",
                "disabled_storage_engines", "innodb_monitor_", "innodb_ft_aux_table", "stopword_table",
                "keyring_operations", "mecab_rc_file", "gtid_next", "proxy_user", "external_user")

NUMERIC_NAMES = {"default_password_lifetime", "default_week_format", "lower_case_table_names",
                 "max_length_for_sort_data", "performance_schema_max_file_classes",
                 "performance_schema_max_file_handles", "performance_schema_max_socket_classes", "sync_relay_log",
                 "sync_relay_log_info", "old_passwords", "protocol_version"}

NUMERIC_SUFFIXES = ("_size", "_limit", "_count", "_timeout", "_period", "_interval", "_threshold", "_depth",
                    "_length", "_len", "_instances", "_threads", "_workers", "_delay", "_days", "_weight",
                    "_bits", "_max", "_lwm", "_pct", "_time", "_port", "_connections", "_packet")

METRICS = {
    "innodb_log_file_size": ("innodb_log_write_requests", "innodb_log_waits", "innodb_os_log_written"),
    "innodb_buffer_pool_size": ("innodb_buffer_pool_reads", "innodb_buffer_pool_wait_free"),
    "bulk_insert_buffer_size": ("innodb_rows_inserted",),
    "max_connections": ("threads_connected", "connection_errors_max_connections"),
    "innodb_flush_log_at_trx_commit": ("innodb_os_log_fsyncs",),
    "autocommit": ("com_commit",),
    "query_cache_size": ("qcache_lowmem_prunes",),
}


def knob_spec(name: str) -> KnobSpec:
    default = DEFAULTS.get(name)
    metrics = METRICS.get(name, ())
    desc = name.replace("_", " ")
    if name in BOOLEANS:
        kind, lo, hi, choices = "boolean", None, None, ()
        default = default or "0"
    elif name in ENUMS:
        kind, lo, hi, choices = "enumeration", None, None, ENUMS[name]
        default = default or ENUMS[name][0]
    elif name in INTEGERS:
        kind, choices = "integer", ()
        lo, hi, d = INTEGERS[name]
        default = default or str(d)
    elif name in REALS:
        kind, choices = "real", ()
        lo, hi, d = REALS[name]
        default = str(d)
    elif any(h in name for h in STRING_HINTS) and not name.endswith(NUMERIC_SUFFIXES) \
            and name not in NUMERIC_NAMES:
        kind, lo, hi, choices = "enumeration", None, None, ("*",)
        default = None
    else:
        kind, lo, hi, choices = "integer", 0, U64, ()
        default = None
    spec = KnobSpec(name, kind, lo, hi, choices, None, desc, metrics)
    if default is not None:
        spec = KnobSpec(name, kind, lo, hi, choices, KnobValue.parse(default, kind), desc, metrics)
    return spec


def write_registry(path: Path) -> list[str]:
    names = [n.strip() for n in NAMES.read_text().splitlines() if n.strip()]
    lines = ["# MySQL 5.7 system variables: name | kind | domain | default | description | related_metrics"]
    lines += [format_registry_line(knob_spec(n)) for n in names]
    atomic_write_text(path, "\n".join(lines) + "\n")
    return names


# ---------------------------------------------------------------------------
# large corpus (counts only matter; texts are templated)

SYMPTOMS = ("runs much slower than last week", "reports errors under load", "stalls during the nightly batch",
            "uses more memory than expected", "drops client connections", "falls behind on the replica",
            "writes huge log files", "rejects some statements")
WORKLOADS = ("bulk loading CSV files", "running reporting queries", "serving many short transactions",
             "rebuilding secondary indexes", "importing a dump", "handling a traffic spike")
ACTIONS = ("controls", "limits", "sets the size of", "decides how the server handles", "affects")
OBJECTS = ("the memory used by each session", "how often data is flushed to disk", "the number of open handles",
           "network timeouts for clients", "the behaviour of replication threads", "how statements are logged",
           "the cache used for temporary results")


def write_large_corpus(path: Path, names: list[str], n_questions=1632, n_manuals=3506, seed=7) -> None:
    rng = random.Random(seed)
    docs = []
    for i in range(n_questions):
        knobs = rng.sample(names, rng.choice((1, 1, 2, 3)))
        text = (f"Our MySQL 5.7 server {rng.choice(SYMPTOMS)} while {rng.choice(WORKLOADS)}. "
                f"Case {i}: which settings should I review?")
        docs.append(Document(f"hq-{i:05d}", DocKind.HISTORICAL, text, frozenset(knobs)))
    for j in range(n_manuals):
        knob = names[j % len(names)]
        text = f"The {knob} variable {rng.choice(ACTIONS)} {rng.choice(OBJECTS)} (note {j})."
        docs.append(Document(f"ms-{j:05d}", DocKind.MANUAL, text, frozenset({knob}), "mysql-5.7-manual"))
    save_corpus(docs, path)


# ---------------------------------------------------------------------------
# slow-INSERT scenario

SLOW_INSERT_QUESTION = DebugQuestion(
    "insert-slow",
    "INSERT of about 40000 rows into the orders table has become very slow, every row runs in its own "
    "transaction and the import now takes many minutes. How can I make the insert faster?",
    frozenset({"foreign_key_checks", "unique_checks", "autocommit"}),
)

SLOW_INSERT_DOCS = [
    Document("h-slow-php", DocKind.HISTORICAL,
             "Inserting 40000 rows from a PHP script is very slow and the insert takes minutes to finish.",
             frozenset({"foreign_key_checks", "unique_checks"})),
    Document("h-300m", DocKind.HISTORICAL,
             "Adding 300 million rows to one table proceeds slowly and the insert rate keeps dropping.",
             frozenset({"innodb_buffer_pool_size"})),
    Document("h-conn", DocKind.HISTORICAL,
             "Clients get a too many connections error at peak hours.", frozenset({"max_connections"})),
    Document("h-replica", DocKind.HISTORICAL,
             "The replica lags hours behind the source after a schema change.",
             frozenset({"slave_parallel_workers"})),
    Document("m-autocommit", DocKind.MANUAL,
             "Bulk imports into InnoDB finish sooner with autocommit disabled, since each committed insert "
             "otherwise forces a log flush.", frozenset({"autocommit"}), "innodb bulk loading"),
    Document("m-unique", DocKind.MANUAL,
             "Setting unique_checks to 0 for the duration of an import skips uniqueness checks on secondary "
             "indexes and speeds up large insert jobs.", frozenset({"unique_checks"}), "innodb bulk loading"),
    Document("m-fk", DocKind.MANUAL,
             "Setting foreign_key_checks to 0 while loading big tables skips referential checks for every "
             "inserted row.", frozenset({"foreign_key_checks"}), "innodb bulk loading"),
    Document("m-bulk", DocKind.MANUAL,
             "bulk_insert_buffer_size bounds the tree cache MyISAM uses for bulk inserts.",
             frozenset({"bulk_insert_buffer_size"}), "server variables"),
    Document("m-logsize", DocKind.MANUAL,
             "A larger innodb_log_file_size reduces checkpoint activity during write heavy workloads.",
             frozenset({"innodb_log_file_size"}), "innodb redo log"),
    Document("m-maxconn", DocKind.MANUAL,
             "max_connections caps the number of simultaneous client sessions.",
             frozenset({"max_connections"}), "server variables"),
]

SLOW_INSERT_CATALOG = [
    ("innodb_log_write_requests", "the number of write requests to the InnoDB redo log", "innodb_log_file_size"),
    ("innodb_rows_inserted", "the number of rows inserted into InnoDB tables", "bulk_insert_buffer_size"),
    ("innodb_buffer_pool_wait_free", "waits for a free page in the InnoDB buffer pool", "innodb_buffer_pool_size"),
    ("threads_connected", "the number of currently open connections", "max_connections"),
    ("com_select", "the number of SELECT statements executed", ""),
]

SLOW_INSERT_PHASE1 = "[foreign_key_checks, unique_checks, autocommit, innodb_log_file_size]"
SLOW_INSERT_PHASE2 = "{foreign_key_checks: 0, unique_checks: 0, autocommit: 0, innodb_log_file_size: 256M}"

NORMAL_LEVEL = 46492
SPIKE_VALUE = 96561


def floor_series(seed: int, length: int, period: int, amp: float, sigma: float, floor: int, floor_count: int):
    """Integer seasonal series whose ``floor_count`` lowest samples sit exactly at ``floor``."""
    rng = SplitMix64(seed)
    t = np.arange(length)
    raw = amp * np.sin(2 * math.pi * t / period) + sigma * rng.normals(length)
    cut = np.sort(raw)[floor_count - 1]
    return floor + np.maximum(np.round(raw - cut), 0.0)


def plain_series(seed: int, length: int, period: int, amp: float, sigma: float, level: int):
    rng = SplitMix64(seed)
    t = np.arange(length)
    return level + np.round(amp * np.sin(2 * math.pi * t / period) + sigma * rng.normals(length))


def slow_insert_series() -> list[TelemetrySeries]:
    n, period = 240, 24
    ts = 1_700_000_000 + 60 * np.arange(n)
    # the exact floor makes the 5th percentile land on NORMAL_LEVEL
    log_writes = floor_series(11, n, period, 1200.0, 60.0, NORMAL_LEVEL, 15)
    log_writes[150] = SPIKE_VALUE
    rows = plain_series(12, n, period, 300.0, 20.0, 8400)
    rows[151] = 26000
    waits = plain_series(13, n, period, 5.0, 1.0, 10)
    waits[152] = 480
    threads = plain_series(14, n, period, 8.0, 1.0, 50)
    selects = plain_series(15, n, period, 900.0, 40.0, 13000)
    values = {"innodb_log_write_requests": log_writes, "innodb_rows_inserted": rows,
              "innodb_buffer_pool_wait_free": waits, "threads_connected": threads, "com_select": selects}
    return [TelemetrySeries(m, ts, v, period) for m, v in values.items()]


def write_slow_insert(out: Path, registry_path: Path) -> None:
    from knobrag.corpus import dump_record
    from knobrag.reasoner.pipeline import ReasonerConfig, build_document_index, diagnose
    from knobrag.telemetry.series import load_catalog

    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "question.txt", SLOW_INSERT_QUESTION.text + "\n")
    q = SLOW_INSERT_QUESTION
    atomic_write_text(out / "questions.jsonl", dump_record(q.as_document()) + "\n")
    save_corpus(SLOW_INSERT_DOCS, out / "corpus.jsonl")
    atomic_write_text(out / "catalog.txt", "".join(f"{m} | {e} | {k}\n" for m, e, k in SLOW_INSERT_CATALOG))
    tdir = out / "telemetry"
    tdir.mkdir(exist_ok=True)
    for s in slow_insert_series():
        write_series_csv(s, tdir / f"{s.metric}.csv")

    registry = load_registry(registry_path, "mysql57")
    docs = {d.id: d for d in SLOW_INSERT_DOCS}

    def run(backend):
        from knobrag.embed.backends import HashingEmbedder
        from knobrag.telemetry.series import load_telemetry_dir
        emb = HashingEmbedder()
        index = build_document_index(SLOW_INSERT_DOCS, emb)
        cfg = ReasonerConfig(registry, docs, backend, emb, load_catalog(out / "catalog.txt", registry), period=24)
        diagnose(q, index, None, load_telemetry_dir(tdir, 24), config=cfg)
        diagnose(q, index, None, None, config=cfg)

    records = record_transcript(run, two_phase_responder(SLOW_INSERT_PHASE1, SLOW_INSERT_PHASE2))
    save_transcript(records, out / "transcript.jsonl")
    atomic_write_text(out / "run.conf", "\n".join([
        "# slow-INSERT scenario, mock backend",
        "registry = ../mysql57.registry",
        "corpus = corpus.jsonl",
        "index = slow_insert.index",
        "telemetry_dir = telemetry",
        "catalog = catalog.txt",
        "period = 24",
        "backend = mock",
        "transcript = transcript.jsonl",
        "",
    ]))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=HERE.parent / "tests" / "fixtures")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    registry_path = args.out / "mysql57.registry"
    names = write_registry(registry_path)
    write_large_corpus(args.out / "mysql57_corpus.jsonl", names)
    write_slow_insert(args.out / "slow_insert", registry_path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
