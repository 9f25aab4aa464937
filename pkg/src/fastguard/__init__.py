"""Fast-attack detection from per-second connection counts toward each victim."""
from .capture import (CaptureFormatError, CaptureReader, DecodeError, ParsedPacket,
                      Protocol, RawPacket, TcpFlag, TruncatedRecordError, decode_packet,
                      parse_capture_file, read_capture)
from .estimators import FastAttackDetector, ShewhartChart, StaticThreshold
from .events import ConnectionEvent, LogParseError, parse_connection_log, serialize_event
from .features import (DEFAULT_PORTS, FeatureRecord, derive_dest_count,
                       extract_initial_connections, segregate_by_port)
from .spc import (Alert, ConfigError, ControlLimits, RuleSet, Side, Status, Verdict,
                  classify_fast_attack, compute_limits, western_electric)
from .synth import HostProfile, inject_attack, synth_host
from .timeseries import (DEFAULT_THRESHOLD, PortSummary, SecondBin, ThresholdConfig,
                         bin_per_second, select_threshold, summarize_port)

__version__ = "0.1.0"
