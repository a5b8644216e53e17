//! auditd log parsing: key-value records grouped into syscall events.
//!
//! Records belonging to one event share an `audit(SECONDS.MILLIS:SERIAL)`
//! key. Records lacking the `msg=audit(...)` header (as in abbreviated log
//! excerpts) attach to the most recently seen event key.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::syscalls::SyscallTable;
use crate::time::Timestamp;

/// Open events kept while grouping interleaved records. Oldest is flushed
/// once this many are in flight.
const OPEN_EVENT_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordType {
    Syscall,
    Execve,
    Cwd,
    Path,
    Sockaddr,
    Proctitle,
    Other,
}

impl RecordType {
    fn from_str(s: &str) -> Self {
        match s {
            "SYSCALL" => RecordType::Syscall,
            "EXECVE" => RecordType::Execve,
            "CWD" => RecordType::Cwd,
            "PATH" => RecordType::Path,
            "SOCKADDR" => RecordType::Sockaddr,
            "PROCTITLE" => RecordType::Proctitle,
            _ => RecordType::Other,
        }
    }
}

pub type EventKey = (Timestamp, u64);

/// One parsed audit record (a single log line).
#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub record_type: RecordType,
    pub event_key: EventKey,
    pub kv: Vec<(String, String)>,
}

impl AuditRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// One audit event, assembled from a SYSCALL record plus its child records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEvent {
    pub timestamp: Timestamp,
    pub serial: u64,
    pub syscall: u32,
    pub ppid: String,
    pub pid: String,
    pub uid: String,
    pub exe: String,
    pub cwd: Option<String>,
    pub paths: Vec<(String, u64)>,
    pub execve_args: Vec<String>,
    pub sockaddr: Option<String>,
}

/// Parse outcome counters; emitted + skipped equals the number of distinct
/// event keys seen.
#[derive(Debug, Clone, Default)]
pub struct ParseStats {
    pub emitted: usize,
    pub skipped_no_syscall: usize,
    pub warnings: Vec<String>,
}

impl ParseStats {
    pub fn warn(&mut self, lineno: usize, msg: impl std::fmt::Display) {
        self.warnings.push(format!("line {lineno}: {msg}"));
    }
}

#[derive(Debug, Default)]
struct PendingEvent {
    syscall: Option<AuditRecord>,
    execve: Option<AuditRecord>,
    cwd: Option<String>,
    paths: Vec<(String, u64)>,
    sockaddr: Option<String>,
}

/// Streaming parser; feed lines, then `finish()`.
pub struct Parser<'a> {
    table: &'a SyscallTable,
    open: IndexMap<EventKey, PendingEvent>,
    last_key: Option<EventKey>,
    events: Vec<AuditEvent>,
    stats: ParseStats,
    lineno: usize,
}

impl<'a> Parser<'a> {
    pub fn new(table: &'a SyscallTable) -> Self {
        Parser {
            table,
            open: IndexMap::new(),
            last_key: None,
            events: Vec::new(),
            stats: ParseStats::default(),
            lineno: 0,
        }
    }

    pub fn push_line(&mut self, line: &str) {
        self.lineno += 1;
        let line = line.trim_end();
        if line.is_empty() {
            return;
        }
        let record = match parse_record(line, self.last_key) {
            Ok(r) => r,
            Err(e) => {
                self.stats.warn(self.lineno, e);
                return;
            }
        };
        self.last_key = Some(record.event_key);
        if !self.open.contains_key(&record.event_key) && self.open.len() >= OPEN_EVENT_CAP {
            // bounded memory: flush the oldest open event
            let (key, pending) = self.open.shift_remove_index(0).unwrap();
            self.finalize(key, pending);
        }
        let pending = self.open.entry(record.event_key).or_default();
        match record.record_type {
            RecordType::Syscall => pending.syscall = Some(record),
            RecordType::Execve => pending.execve = Some(record),
            RecordType::Cwd => pending.cwd = record.get("cwd").map(str::to_string),
            RecordType::Path => {
                if let Some(name) = record.get("name") {
                    let inode = record
                        .get("inode")
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(0);
                    pending.paths.push((name.to_string(), inode));
                }
            }
            RecordType::Sockaddr => {
                if let Some(saddr) = record.get("saddr") {
                    pending.sockaddr = Some(format_sockaddr(saddr));
                }
            }
            RecordType::Proctitle | RecordType::Other => {}
        }
    }

    fn finalize(&mut self, key: EventKey, pending: PendingEvent) {
        let Some(sys) = pending.syscall else {
            self.stats.skipped_no_syscall += 1;
            return;
        };
        let Some(syscall) = sys.get("syscall").and_then(|s| s.parse::<u32>().ok()) else {
            self.stats.skipped_no_syscall += 1;
            return;
        };
        let mut execve_args = Vec::new();
        if let Some(ex) = &pending.execve {
            let argc: usize = ex.get("argc").and_then(|s| s.parse().ok()).unwrap_or(0);
            for i in 0..argc {
                if let Some(arg) = ex.get(&format!("a{i}")) {
                    execve_args.push(arg.to_string());
                }
            }
        }
        let field = |k: &str| sys.get(k).unwrap_or("").to_string();
        self.events.push(AuditEvent {
            timestamp: key.0,
            serial: key.1,
            syscall,
            ppid: field("ppid"),
            pid: field("pid"),
            uid: field("uid"),
            exe: field("exe"),
            cwd: pending.cwd,
            paths: pending.paths,
            execve_args,
            sockaddr: pending.sockaddr,
        });
        self.stats.emitted += 1;
    }

    /// Table used for optional syscall-name resolution.
    pub fn table(&self) -> &SyscallTable {
        self.table
    }

    /// Flushes all open events and returns events sorted by (timestamp, serial).
    pub fn finish(mut self) -> (Vec<AuditEvent>, ParseStats) {
        while let Some((key, pending)) = self.open.shift_remove_index(0) {
            self.finalize(key, pending);
        }
        self.events
            .sort_by_key(|e| (e.timestamp, e.serial));
        (self.events, self.stats)
    }
}

/// Parses a whole log text.
pub fn parse_stream(text: &str, table: &SyscallTable) -> (Vec<AuditEvent>, ParseStats) {
    let mut parser = Parser::new(table);
    for line in text.lines() {
        parser.push_line(line);
    }
    parser.finish()
}

fn parse_record(line: &str, last_key: Option<EventKey>) -> Result<AuditRecord, String> {
    let rest = line
        .strip_prefix("type=")
        .ok_or_else(|| format!("missing type= prefix: {line:?}"))?;
    let (type_tok, mut rest) = match rest.split_once(' ') {
        Some((t, r)) => (t, r),
        None => (rest, ""),
    };
    let type_name = type_tok.trim_end_matches(':');
    let record_type = RecordType::from_str(type_name);

    let event_key = if let Some(after) = rest.trim_start().strip_prefix("msg=audit(") {
        let (key_str, tail) = after
            .split_once(')')
            .ok_or_else(|| "unterminated audit(...) header".to_string())?;
        let (ts, serial) = key_str
            .split_once(':')
            .ok_or_else(|| format!("malformed event header {key_str:?}"))?;
        let ts: Timestamp = ts
            .parse()
            .map_err(|_| format!("bad timestamp {ts:?}"))?;
        let serial: u64 = serial
            .parse()
            .map_err(|_| format!("bad serial {serial:?}"))?;
        rest = tail.trim_start_matches(':').trim_start();
        (ts, serial)
    } else {
        last_key.ok_or_else(|| "record without audit header and no preceding event".to_string())?
    };

    Ok(AuditRecord {
        record_type,
        event_key,
        kv: parse_kv(rest),
    })
}

/// Splits `k=v` pairs, honoring double-quoted values (quotes stripped).
fn parse_kv(s: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let b = s.as_bytes();
    let n = s.len();
    let mut i = 0;
    while i < n {
        while i < n && b[i] == b' ' {
            i += 1;
        }
        if i >= n {
            break;
        }
        let Some(eq_off) = s[i..].find('=') else { break };
        let key_end = i + eq_off;
        if s[i..key_end].contains(' ') {
            // stray token without '='; skip it
            i += s[i..].find(' ').unwrap_or(n - i);
            continue;
        }
        let key = &s[i..key_end];
        let mut j = key_end + 1;
        let value = if j < n && b[j] == b'"' {
            j += 1;
            let end = s[j..].find('"').map(|o| j + o).unwrap_or(n);
            let v = &s[j..end];
            j = (end + 1).min(n);
            v
        } else {
            let end = s[j..].find(' ').map(|o| j + o).unwrap_or(n);
            let v = &s[j..end];
            j = end;
            v
        };
        out.push((key.to_string(), value.to_string()));
        i = j;
    }
    out
}

/// Canonical socket address formatting from the auditd hex `saddr` payload.
///
/// inet is "ip:port", inet6 "[ip]:port", unix "unix:path"; any other family
/// falls back to "fam<N>:<hexpayload>". Truncated or undecodable payloads
/// yield "fam?:<hexpayload>" rather than an error.
pub fn format_sockaddr(raw: &str) -> String {
    let raw = raw.trim();
    let Some(bytes) = decode_hex(raw) else {
        return format!("fam?:{}", raw.to_ascii_lowercase());
    };
    if bytes.len() < 2 {
        return format!("fam?:{}", hex_str(&bytes));
    }
    let family = u16::from_le_bytes([bytes[0], bytes[1]]);
    match family {
        // AF_UNIX
        1 => {
            let path: Vec<u8> = bytes[2..]
                .iter()
                .copied()
                .take_while(|&b| b != 0)
                .collect();
            format!("unix:{}", String::from_utf8_lossy(&path))
        }
        // AF_INET: 2-byte BE port, 4-byte address
        2 => {
            if bytes.len() < 8 {
                return format!("fam?:{}", hex_str(&bytes));
            }
            let port = u16::from_be_bytes([bytes[2], bytes[3]]);
            format!(
                "{}.{}.{}.{}:{}",
                bytes[4], bytes[5], bytes[6], bytes[7], port
            )
        }
        // AF_INET6: port, flowinfo, 16-byte address
        10 => {
            if bytes.len() < 24 {
                return format!("fam?:{}", hex_str(&bytes));
            }
            let port = u16::from_be_bytes([bytes[2], bytes[3]]);
            let groups: Vec<String> = bytes[8..24]
                .chunks(2)
                .map(|c| format!("{:x}", u16::from_be_bytes([c[0], c[1]])))
                .collect();
            format!("[{}]:{}", groups.join(":"), port)
        }
        n => format!("fam{}:{}", n, hex_str(&bytes[2..])),
    }
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
        .collect()
}

fn hex_str(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The sample privilege-escalation event used throughout the tests.
    pub const SAMPLE_EVENT: &str = r#"type=SYSCALL msg=audit(1632851805.333:76118): syscall=59 ppid=12261 pid=12272 uid=0 comm="escape.sh" exe="/bin/busybox"
type=EXECVE: argc=2 a0="/bin/sh" a1="/escape.sh"
type=CWD: cwd="/privesc"
type=PATH: name="/escape.sh" inode=667188
type=PATH: name="/bin/sh" inode=65711
type=PATH: name="/lib/ld-musl-x86_64.so.1" inode=65873
type=PROCTITLE: proctitle=72756E6300696E6974
"#;

    fn table() -> SyscallTable {
        SyscallTable::builtin("x86-64").unwrap()
    }

    #[test]
    fn sample_event_parses_fully() {
        let (events, stats) = parse_stream(SAMPLE_EVENT, &table());
        assert_eq!(events.len(), 1);
        assert!(stats.warnings.is_empty());
        let e = &events[0];
        assert_eq!(e.timestamp.to_string(), "1632851805.333");
        assert_eq!(e.serial, 76118);
        assert_eq!(e.syscall, 59);
        assert_eq!(e.ppid, "12261");
        assert_eq!(e.pid, "12272");
        assert_eq!(e.uid, "0");
        assert_eq!(e.exe, "/bin/busybox");
        assert_eq!(e.cwd.as_deref(), Some("/privesc"));
        assert_eq!(
            e.paths,
            vec![
                ("/escape.sh".to_string(), 667188),
                ("/bin/sh".to_string(), 65711),
                ("/lib/ld-musl-x86_64.so.1".to_string(), 65873),
            ]
        );
        assert_eq!(e.execve_args, vec!["/bin/sh", "/escape.sh"]);
        assert!(e.sockaddr.is_none());
    }

    #[test]
    fn empty_stream_is_empty() {
        let (events, stats) = parse_stream("", &table());
        assert!(events.is_empty());
        assert!(stats.warnings.is_empty());
        assert_eq!(stats.emitted + stats.skipped_no_syscall, 0);
    }

    #[test]
    fn event_without_syscall_record_is_skipped() {
        let log = "\
type=SYSCALL msg=audit(100.000:1): syscall=3 ppid=1 pid=2 uid=0 exe=\"/bin/a\"
type=PROCTITLE msg=audit(100.100:2): proctitle=ABCD
type=SYSCALL msg=audit(100.200:3): syscall=4 ppid=1 pid=2 uid=0 exe=\"/bin/a\"
";
        let (events, stats) = parse_stream(log, &table());
        assert_eq!(events.len(), 2);
        assert_eq!(stats.skipped_no_syscall, 1);
        assert_eq!(stats.emitted + stats.skipped_no_syscall, 3);
    }

    #[test]
    fn interleaved_records_group_by_key() {
        let log = "\
type=SYSCALL msg=audit(100.000:1): syscall=3 pid=2 uid=0 exe=\"/bin/a\"
type=SYSCALL msg=audit(100.050:2): syscall=4 pid=3 uid=0 exe=\"/bin/b\"
type=PATH msg=audit(100.000:1): name=\"/x\" inode=1
type=PATH msg=audit(100.050:2): name=\"/y\" inode=2
";
        let (events, _) = parse_stream(log, &table());
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].paths, vec![("/x".to_string(), 1)]);
        assert_eq!(events[1].paths, vec![("/y".to_string(), 2)]);
    }

    #[test]
    fn malformed_line_warns_and_continues() {
        let log = "garbage\ntype=SYSCALL msg=audit(1.000:1): syscall=3 pid=2 uid=0 exe=\"/a\"\n";
        let (events, stats) = parse_stream(log, &table());
        assert_eq!(events.len(), 1);
        assert_eq!(stats.warnings.len(), 1);
        assert!(stats.warnings[0].starts_with("line 1:"));
    }

    #[test]
    fn determinism() {
        let (a, _) = parse_stream(SAMPLE_EVENT, &table());
        let (b, _) = parse_stream(SAMPLE_EVENT, &table());
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn sockaddr_inet() {
        // AF_INET=2 (LE), port 80 (BE), 127.0.0.1
        assert_eq!(format_sockaddr("020000507F000001"), "127.0.0.1:80");
    }

    #[test]
    fn sockaddr_unix() {
        let mut hex = String::from("0100");
        for b in "/run/x.sock".bytes() {
            hex.push_str(&format!("{b:02X}"));
        }
        hex.push_str("00");
        assert_eq!(format_sockaddr(&hex), "unix:/run/x.sock");
    }

    #[test]
    fn sockaddr_unknown_family_fallback() {
        assert_eq!(format_sockaddr("2A00DEAD"), "fam42:dead");
    }

    #[test]
    fn sockaddr_truncated_fallback() {
        assert_eq!(format_sockaddr("02"), "fam?:02");
        assert_eq!(format_sockaddr("0200"), "fam?:0200");
    }
}
