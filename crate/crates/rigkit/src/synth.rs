//! Synthetic auditd log generation: container-like benign background plus
//! injectable DoS-like and privilege-escalation-like attack bursts with
//! exact ground-truth windows.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::AttackWindow;
use crate::time::Timestamp;

/// Epoch base for generated timestamps.
const T0_MS: i64 = 1_700_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    DosLike,
    PrivescLike,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundProfile {
    pub user: String,
    pub exe: String,
    pub files: Vec<String>,
    pub sockets: Vec<(String, u16)>,
    pub rate_hz: f64,
    /// Fresh pid every two events, mimicking recurring short-lived helpers.
    pub short_lived: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_secs: f64,
    pub profiles: Vec<BackgroundProfile>,
    pub attack: AttackKind,
    pub attack_start_secs: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Three container-like background profiles over `duration_secs`.
    pub fn default_background(
        duration_secs: f64,
        attack: AttackKind,
        attack_start_secs: f64,
        seed: u64,
    ) -> Self {
        let profile = |i: usize| BackgroundProfile {
            user: format!("{}", 1000 + i),
            exe: format!("/usr/bin/container{i}"),
            files: (0..20).map(|f| format!("/var/lib/c{i}/data{f}.db")).collect(),
            sockets: vec![(format!("10.0.{i}.2"), 8080), (format!("10.0.{i}.3"), 5432)],
            rate_hz: 1.0,
            short_lived: false,
        };
        ScenarioSpec {
            duration_secs,
            profiles: (0..3).map(profile).collect(),
            attack,
            attack_start_secs,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
struct RawEvent {
    t_ms: i64,
    source: usize,
    syscall: u32,
    ppid: String,
    pid: String,
    uid: String,
    exe: String,
    paths: Vec<(String, u64)>,
    execve: Vec<String>,
    sockaddr_hex: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedLog {
    pub text: String,
    pub window: Option<AttackWindow>,
    pub emitted_events: usize,
}

fn inet_saddr_hex(ip: &str, port: u16) -> String {
    let mut hex = String::from("0200");
    hex.push_str(&format!("{port:04X}"));
    for octet in ip.split('.') {
        let b: u8 = octet.parse().unwrap_or(0);
        hex.push_str(&format!("{b:02X}"));
    }
    // pad to the 16-byte sockaddr_in size
    while hex.len() < 32 {
        hex.push('0');
    }
    hex
}

fn exp_interval_ms(rng: &mut ChaCha8Rng, rate_hz: f64) -> i64 {
    let u: f64 = rng.random::<f64>().max(1e-12);
    ((-u.ln() / rate_hz) * 1000.0).max(1.0) as i64
}

fn background_events(spec: &ScenarioSpec, idx: usize, profile: &BackgroundProfile) -> Vec<RawEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    let end_ms = T0_MS + (spec.duration_secs * 1000.0) as i64;
    let base_pid = 2000 + idx as u64 * 10;
    let mut events = Vec::new();
    let mut t = T0_MS + exp_interval_ms(&mut rng, profile.rate_hz);
    let mut i = 0usize;
    while t < end_ms {
        let pid = if profile.short_lived {
            format!("{}", 100_000 + idx as u64 * 1_000_000 + (i as u64 / 2))
        } else {
            format!("{base_pid}")
        };
        // regular workload: round-robin file pool, open/read/write/close
        // cycle, periodic socket traffic; randomness sits in the timing only
        let file = profile.files[i % profile.files.len()].clone();
        let syscall = [5u32, 3, 4, 6][i % 4];
        let sockaddr_hex = if i % 20 == 19 && !profile.sockets.is_empty() {
            let (ip, port) = &profile.sockets[i / 20 % profile.sockets.len()];
            Some(inet_saddr_hex(ip, *port))
        } else {
            None
        };
        events.push(RawEvent {
            t_ms: t,
            source: idx,
            syscall: if sockaddr_hex.is_some() { 17 } else { syscall },
            ppid: "1".to_string(),
            pid,
            uid: profile.user.clone(),
            exe: profile.exe.clone(),
            paths: vec![(file, 1000 + i as u64)],
            execve: Vec::new(),
            sockaddr_hex,
        });
        t += exp_interval_ms(&mut rng, profile.rate_hz);
        i += 1;
    }
    events
}

fn attack_events(spec: &ScenarioSpec) -> (Vec<RawEvent>, Option<AttackWindow>) {
    let start_ms = T0_MS + (spec.attack_start_secs * 1000.0) as i64;
    match spec.attack {
        AttackKind::None => (Vec::new(), None),
        AttackKind::DosLike => {
            // burst of fresh processes writing many new shell scripts
            let n = 800;
            let dur_secs = 30.0;
            let step = (dur_secs * 1000.0) as i64 / n as i64;
            let events = (0..n)
                .map(|i| RawEvent {
                    t_ms: start_ms + i as i64 * step,
                    source: 100,
                    syscall: [4u32, 5, 8][i % 3],
                    ppid: "999".to_string(),
                    pid: format!("{}", 9000 + i),
                    uid: "0".to_string(),
                    exe: "/bin/busybox".to_string(),
                    paths: vec![(format!("/dos/payload{}.sh", i % 80), 5_000 + i as u64)],
                    execve: Vec::new(),
                    sockaddr_hex: None,
                })
                .collect();
            let window = AttackWindow::new(Timestamp::from_millis(start_ms), dur_secs);
            (events, Some(window))
        }
        AttackKind::PrivescLike => {
            // short sequence rewriting permissions files through an overlay
            let n = 300;
            let dur_secs = 20.0;
            let step = (dur_secs * 1000.0) as i64 / n as i64;
            let files = [
                "/host/etc/permissions",
                "/escape.sh",
                "/privesc/overlay",
                "/host/etc/group",
                "/host/etc/passwd",
                "/host/etc/shadow",
                "/host/etc/sudoers",
                "/host/etc/crontab",
                "/host/root/.ssh/authorized_keys",
                "/privesc/staging",
            ];
            let events = (0..n)
                .map(|i| {
                    let execve = if i % 10 == 0 {
                        vec!["/bin/sh".to_string(), "/escape.sh".to_string()]
                    } else {
                        Vec::new()
                    };
                    RawEvent {
                        t_ms: start_ms + i as i64 * step,
                        source: 101,
                        syscall: [15u32, 11][i % 2],
                        ppid: "998".to_string(),
                        pid: format!("{}", 9500 + i / 10),
                        uid: "0".to_string(),
                        exe: "/privesc/escape".to_string(),
                        paths: vec![(files[i % files.len()].to_string(), 6_000 + i as u64)],
                        execve,
                        sockaddr_hex: None,
                    }
                })
                .collect();
            let window = AttackWindow::new(Timestamp::from_millis(start_ms), dur_secs);
            (events, Some(window))
        }
    }
}

fn render(events: &[RawEvent]) -> String {
    let mut out = String::new();
    for (i, e) in events.iter().enumerate() {
        let serial = 1000 + i as u64;
        let ts = Timestamp::from_millis(e.t_ms);
        let header = format!("msg=audit({ts}:{serial})");
        out.push_str(&format!(
            "type=SYSCALL {header}: syscall={} success=yes ppid={} pid={} uid={} comm=\"gen\" exe=\"{}\"\n",
            e.syscall, e.ppid, e.pid, e.uid, e.exe
        ));
        if !e.execve.is_empty() {
            let mut line = format!("type=EXECVE {header}: argc={}", e.execve.len());
            for (j, arg) in e.execve.iter().enumerate() {
                line.push_str(&format!(" a{j}=\"{arg}\""));
            }
            out.push_str(&line);
            out.push('\n');
        }
        for (item, (name, inode)) in e.paths.iter().enumerate() {
            out.push_str(&format!(
                "type=PATH {header}: item={item} name=\"{name}\" inode={inode}\n"
            ));
        }
        if let Some(saddr) = &e.sockaddr_hex {
            out.push_str(&format!("type=SOCKADDR {header}: saddr={saddr}\n"));
        }
    }
    out
}

/// Generates auditd-format text plus the exact attack window sidecar.
/// Deterministic: identical spec and seed give identical bytes.
pub fn generate(spec: &ScenarioSpec) -> GeneratedLog {
    assert!(spec.duration_secs > 0.0, "duration must be > 0");
    assert!(
        spec.attack == AttackKind::None
            || (0.0..spec.duration_secs).contains(&spec.attack_start_secs),
        "attack_start must lie in [0, duration)"
    );
    assert!(
        spec.profiles.iter().all(|p| p.rate_hz > 0.0),
        "profile rates must be > 0"
    );
    let mut events: Vec<RawEvent> = Vec::new();
    for (idx, profile) in spec.profiles.iter().enumerate() {
        events.extend(background_events(spec, idx, profile));
    }
    let (attack, window) = attack_events(spec);
    events.extend(attack);
    events.sort_by_key(|e| (e.t_ms, e.source));
    GeneratedLog {
        text: render(&events),
        window,
        emitted_events: events.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::parse_stream;
    use crate::graph::{build_graph, BuildOptions, GraphMode};
    use crate::label::label_edges;
    use crate::syscalls::SyscallTable;

    fn table() -> SyscallTable {
        SyscallTable::builtin("x86-32").unwrap()
    }

    #[test]
    fn generated_log_parses_round_trip() {
        let spec = ScenarioSpec::default_background(60.0, AttackKind::DosLike, 30.0, 1);
        let log = generate(&spec);
        let (events, stats) = parse_stream(&log.text, &table());
        assert!(stats.warnings.is_empty(), "{:?}", stats.warnings);
        assert_eq!(events.len(), log.emitted_events);
    }

    #[test]
    fn seeded_determinism() {
        let spec = ScenarioSpec::default_background(60.0, AttackKind::PrivescLike, 20.0, 9);
        assert_eq!(generate(&spec).text, generate(&spec).text);
    }

    #[test]
    fn no_attack_means_no_abnormal_edges() {
        let spec = ScenarioSpec::default_background(60.0, AttackKind::None, 0.0, 2);
        let log = generate(&spec);
        assert!(log.window.is_none());
        let (events, _) = parse_stream(&log.text, &table());
        let (g, _) = build_graph(&events, GraphMode::PseudoProcess, BuildOptions::default());
        // a window strictly outside the log labels nothing abnormal
        let w = AttackWindow::new(Timestamp::from_millis(0), 1.0);
        let s = label_edges(&g, &w);
        assert_eq!(s.abnormal, 0);
    }

    #[test]
    fn dos_has_more_events_than_privesc() {
        let base = |attack| {
            let spec = ScenarioSpec::default_background(60.0, attack, 20.0, 3);
            generate(&spec).emitted_events
        };
        let none = base(AttackKind::None);
        let dos = base(AttackKind::DosLike);
        let privesc = base(AttackKind::PrivescLike);
        assert!(dos - none > privesc - none);
    }

    #[test]
    fn window_sidecar_matches_injection() {
        let spec = ScenarioSpec::default_background(120.0, AttackKind::DosLike, 50.0, 4);
        let log = generate(&spec);
        let w = log.window.unwrap();
        assert_eq!(w.start, Timestamp::from_millis(T0_MS + 50_000));
        assert_eq!(w.duration_secs, 30.0);
        let (events, _) = parse_stream(&log.text, &table());
        let (g, _) = build_graph(&events, GraphMode::PseudoProcess, BuildOptions::default());
        let s = label_edges(&g, &w);
        assert!(s.abnormal > 0);
    }

    #[test]
    fn attack_edges_are_created_inside_the_window() {
        let spec = ScenarioSpec::default_background(120.0, AttackKind::PrivescLike, 60.0, 5);
        let log = generate(&spec);
        let w = log.window.unwrap();
        let (events, _) = parse_stream(&log.text, &table());
        let (g, _) = build_graph(&events, GraphMode::PseudoProcess, BuildOptions::default());
        let s = label_edges(&g, &w);
        // the privesc pseudo process and its files are new in-window edges
        assert!(s.abnormal >= 5, "abnormal={}", s.abnormal);
    }
}
