//! Abstract enterprise hosts: services, domain credentials, Windows-style
//! event emission, mailboxes, and the scripted NPC population.
//!
//! Hosts do not model real operating systems. A host is an endpoint with a
//! service set, an event sink (with an attacker-controllable suppression
//! window), and optionally cached credentials that a harvesting ability can
//! steal. NPC behaviour is drawn per simulated day: each role performs its
//! configured action count at uniformly random instants inside working
//! hours.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::kernel::{SimRng, VirtualTime};
use crate::net::{SegmentId, Transport};

pub type HostId = String;

/// Windows-style event ids used across the simulation. 4624/4625/4672 are
/// the classic logon trio; the rest are the minimal additions so every
/// attack step has a host-level realization.
pub const EVENT_LOGON_SUCCESS: u16 = 4624;
pub const EVENT_LOGON_FAILURE: u16 = 4625;
pub const EVENT_SPECIAL_PRIVILEGE: u16 = 4672;
pub const EVENT_PROCESS_CREATION: u16 = 4688;
pub const EVENT_SHARE_ACCESS: u16 = 5140;
pub const EVENT_SERVICE_INSTALL: u16 = 7045;

pub const EVENT_CATALOGUE: [u16; 6] = [4624, 4625, 4672, 4688, 5140, 7045];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsFamily {
    Workstation,
    Server,
    Linux,
}

/// Network-facing roles a host can play. Each maps to a listening port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Service {
    Mail,
    Web,
    SmbShare,
    SmbShareSecured,
    Rdp,
    AuthDc,
    MqttBroker,
    Plc,
    Hmi,
    Historian,
    /// External attacker command-and-control listener.
    C2,
    /// Simulated internet web service.
    WebSim,
}

impl Service {
    pub fn port(&self) -> (Transport, u16) {
        match self {
            Service::Mail => (Transport::Tcp, 25),
            Service::Web | Service::WebSim => (Transport::Tcp, 80),
            Service::SmbShare | Service::SmbShareSecured => (Transport::Tcp, 445),
            Service::Rdp => (Transport::Tcp, 3389),
            Service::AuthDc => (Transport::Tcp, 88),
            Service::MqttBroker => (Transport::Tcp, 1883),
            Service::Plc => (Transport::Tcp, 502),
            Service::Hmi => (Transport::Tcp, 8080),
            Service::Historian => (Transport::Tcp, 8081),
            Service::C2 => (Transport::Tcp, 443),
        }
    }

    pub fn parse(name: &str) -> Option<Service> {
        Some(match name {
            "mail" => Service::Mail,
            "web" => Service::Web,
            "smb_share" => Service::SmbShare,
            "smb_share_secured" => Service::SmbShareSecured,
            "rdp" => Service::Rdp,
            "auth_dc" => Service::AuthDc,
            "mqtt_broker" => Service::MqttBroker,
            "plc" => Service::Plc,
            "hmi" => Service::Hmi,
            "historian" => Service::Historian,
            "c2" => Service::C2,
            "web_sim" => Service::WebSim,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Host {
    pub id: HostId,
    pub addr: Ipv4Addr,
    pub segment: SegmentId,
    pub os: OsFamily,
    pub services: BTreeSet<Service>,
    pub domain: Option<String>,
    /// Host events are swallowed until this instant (defence impairment).
    pub events_suppressed_until: Option<VirtualTime>,
    pub implants: BTreeSet<String>,
}

impl Host {
    pub fn has(&self, service: Service) -> bool {
        self.services.contains(&service)
    }

    pub fn events_suppressed(&self, now: VirtualTime) -> bool {
        self.events_suppressed_until.map(|t| now < t).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretGrade {
    User,
    Service,
    DomainAdmin,
}

/// A domain credential. `secret_version` models rotation: a logon succeeds
/// only when the presenter knows the current version.
#[derive(Debug, Clone)]
pub struct Credential {
    pub principal: String,
    pub domain: String,
    pub grade: SecretGrade,
    pub stored_on: BTreeSet<HostId>,
    pub kerberoastable: bool,
    pub secret_version: u32,
}

impl Credential {
    /// Whether this credential authenticates against `host_domain`.
    /// Domain admins of a parent domain are honoured in child domains.
    pub fn valid_for_domain(&self, host_domain: &str) -> bool {
        host_domain == self.domain
            || (self.grade == SecretGrade::DomainAdmin && host_domain.ends_with(&self.domain))
    }
}

/// Outcome of one authentication attempt at a host.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthOutcome {
    Success { privileged: bool },
    Failure,
}

/// Pure authentication decision; the caller owns reachability and event
/// emission.
pub fn authenticate(
    credential: Option<&Credential>,
    presented_version: u32,
    host_domain: Option<&str>,
) -> AuthOutcome {
    let Some(cred) = credential else {
        return AuthOutcome::Failure;
    };
    let Some(domain) = host_domain else {
        return AuthOutcome::Failure;
    };
    if !cred.valid_for_domain(domain) || cred.secret_version != presented_version {
        return AuthOutcome::Failure;
    }
    AuthOutcome::Success { privileged: cred.grade == SecretGrade::DomainAdmin }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Susceptibility {
    None,
    ClicksPhish,
    RunsBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NpcRole {
    NormalIt,
    VictimIt,
    Engineering,
    NormalOt,
    VictimOt,
}

impl NpcRole {
    pub fn susceptibility(&self) -> Susceptibility {
        match self {
            NpcRole::VictimIt => Susceptibility::ClicksPhish,
            NpcRole::VictimOt => Susceptibility::RunsBinary,
            _ => Susceptibility::None,
        }
    }

    /// Daily action schedule: `(action, times per day)`.
    ///
    /// Web/document/email counts follow the modelled office workload; the
    /// continuous OT monitoring duty is discretized to one check per
    /// working hour.
    pub fn schedule(&self) -> &'static [(NpcActionKind, u32)] {
        match self {
            NpcRole::NormalIt => &[
                (NpcActionKind::WebBrowse, 5),
                (NpcActionKind::EditDocument, 3),
                (NpcActionKind::SendEmail, 10),
            ],
            NpcRole::VictimIt => {
                &[(NpcActionKind::WebBrowse, 5), (NpcActionKind::SendEmail, 10)]
            }
            NpcRole::Engineering => &[(NpcActionKind::RdpToJumpHost, 2)],
            NpcRole::NormalOt | NpcRole::VictimOt => &[(NpcActionKind::MonitorScada, 8)],
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum NpcActionKind {
    WebBrowse,
    EditDocument,
    SendEmail,
    RdpToJumpHost,
    MonitorScada,
}

/// One scripted user bound to a workstation.
#[derive(Debug)]
pub struct Npc {
    pub name: String,
    pub role: NpcRole,
    pub host: HostId,
    pub rng: SimRng,
    /// Secret version this user believes is current (stale after rotation).
    pub known_secret: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub filename: String,
    pub malicious: bool,
    /// Implant id installed if the attachment is executed.
    pub implant: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MailItem {
    pub from: String,
    pub to: String,
    pub subject: String,
    pub body_bytes: u32,
    pub attachment: Option<Attachment>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cred(grade: SecretGrade, domain: &str) -> Credential {
        Credential {
            principal: "u@x".into(),
            domain: domain.into(),
            grade,
            stored_on: BTreeSet::new(),
            kerberoastable: false,
            secret_version: 0,
        }
    }

    #[test]
    fn domain_admin_valid_in_child_domain() {
        let admin = cred(SecretGrade::DomainAdmin, "simple.local");
        assert_eq!(
            authenticate(Some(&admin), 0, Some("ot.simple.local")),
            AuthOutcome::Success { privileged: true }
        );
        let user = cred(SecretGrade::User, "simple.local");
        assert_eq!(authenticate(Some(&user), 0, Some("ot.simple.local")), AuthOutcome::Failure);
    }

    #[test]
    fn rotation_invalidates_stale_secret() {
        let mut c = cred(SecretGrade::User, "simple.local");
        assert_eq!(
            authenticate(Some(&c), 0, Some("simple.local")),
            AuthOutcome::Success { privileged: false }
        );
        c.secret_version += 1;
        assert_eq!(authenticate(Some(&c), 0, Some("simple.local")), AuthOutcome::Failure);
        assert_eq!(
            authenticate(Some(&c), 1, Some("simple.local")),
            AuthOutcome::Success { privileged: false }
        );
    }

    #[test]
    fn schedules_match_roles() {
        assert_eq!(
            NpcRole::NormalIt.schedule().iter().map(|(_, f)| f).sum::<u32>(),
            18
        );
        assert_eq!(NpcRole::Engineering.schedule(), &[(NpcActionKind::RdpToJumpHost, 2)]);
        assert_eq!(NpcRole::VictimIt.susceptibility(), Susceptibility::ClicksPhish);
        assert_eq!(NpcRole::NormalIt.susceptibility(), Susceptibility::None);
    }

    #[test]
    fn suppression_window_expires() {
        let mut host = Host {
            id: "ws".into(),
            addr: "10.0.0.1".parse().unwrap(),
            segment: SegmentId::ItLan,
            os: OsFamily::Workstation,
            services: BTreeSet::new(),
            domain: None,
            events_suppressed_until: Some(1_000),
            implants: BTreeSet::new(),
        };
        assert!(host.events_suppressed(999));
        assert!(!host.events_suppressed(1_000));
        host.events_suppressed_until = None;
        assert!(!host.events_suppressed(0));
    }
}
