//! People-side event handlers: NPC day planning and actions, the mail
//! queue, authentication, and credential rotation.
//!
//! Each simulated day starts at the top of the working window; every NPC
//! draws its full daily action schedule up front (exact counts, uniformly
//! random instants), so long benign runs hit the configured frequencies
//! exactly while the instants stay seed-dependent.

use crate::hosts::{
    authenticate, AuthOutcome, MailItem, NpcActionKind, Susceptibility,
    EVENT_LOGON_FAILURE, EVENT_LOGON_SUCCESS, EVENT_PROCESS_CREATION, EVENT_SERVICE_INSTALL,
    EVENT_SHARE_ACCESS, EVENT_SPECIAL_PRIVILEGE,
};
use crate::kernel::{MICROS_PER_DAY, MICROS_PER_SEC};
use crate::net::Transport;
use crate::telemetry::{BenignKind, Cause};

use super::{AppData, AuthChannel, EventKind, Payload, SessionPurpose, SessionState, World, WorldError};

fn npc_cause() -> Cause {
    Cause::Benign(BenignKind::Npc)
}

impl World {
    pub(super) fn on_npc_plan_day(&mut self, day: u64) -> Result<(), WorldError> {
        let day_start = day * MICROS_PER_DAY;
        let window_us = self.working_day_us;
        let multiplier = self.scenario.run.npc_frequency_multiplier.max(1);

        let names: Vec<String> = self.npcs.keys().cloned().collect();
        for name in names {
            let role = self.npcs[&name].role;
            for (kind, per_day) in role.schedule() {
                for _ in 0..(per_day * multiplier) {
                    let offset = {
                        let npc = self.npcs.get_mut(&name).expect("npc exists");
                        npc.rng.range_u64(0, window_us)
                    };
                    self.queue.schedule(
                        day_start + offset,
                        EventKind::NpcAction { npc: name.clone(), kind: *kind },
                    )?;
                }
            }
        }
        self.queue
            .schedule(day_start + MICROS_PER_DAY, EventKind::NpcPlanDay { day: day + 1 })?;
        Ok(())
    }

    pub(super) fn on_npc_action(
        &mut self,
        name: &str,
        kind: NpcActionKind,
    ) -> Result<(), WorldError> {
        let (host, role) = {
            let npc = self.npcs.get(name).expect("npc exists");
            (npc.host.clone(), npc.role)
        };
        *self.npc_action_counts.entry((role, kind)).or_insert(0) += 1;

        match kind {
            NpcActionKind::WebBrowse => {
                let server = self.scenario.services.intranet_host.clone();
                let key = self.open_session(
                    &host,
                    &server,
                    Transport::Tcp,
                    80,
                    SessionPurpose::NpcTraffic,
                );
                self.send_to_responder(
                    key,
                    Payload::Opaque(300),
                    AppData::HttpRequest { response_bytes: 1800 },
                    npc_cause(),
                )?;
            }
            NpcActionKind::EditDocument => {
                let server = self.scenario.services.share_host.clone();
                let key = self.open_session(
                    &host,
                    &server,
                    Transport::Tcp,
                    445,
                    SessionPurpose::NpcTraffic,
                );
                self.send_to_responder(
                    key,
                    Payload::Opaque(900),
                    AppData::SmbAccess { share: "documents".into() },
                    npc_cause(),
                )?;
            }
            NpcActionKind::SendEmail => {
                let recipient = self.pick_mail_peer(name);
                let item = MailItem {
                    from: name.to_owned(),
                    to: recipient,
                    subject: "status update".into(),
                    body_bytes: 700,
                    attachment: None,
                };
                self.deliver_mail(&host, item, npc_cause())?;
            }
            NpcActionKind::RdpToJumpHost => {
                let jump = self.scenario.campaign.jump_host.clone();
                let (principal, version) = {
                    let npc = self.npcs.get(name).expect("npc exists");
                    (npc.name.clone(), npc.known_secret)
                };
                let key = self.open_session(
                    &host,
                    &jump,
                    Transport::Tcp,
                    3389,
                    SessionPurpose::NpcTraffic,
                );
                self.send_to_responder(
                    key,
                    Payload::Opaque(1500),
                    AppData::AuthRequest {
                        principal,
                        secret_version: version,
                        channel: AuthChannel::Rdp,
                        install_implant: None,
                    },
                    npc_cause(),
                )?;
            }
            NpcActionKind::MonitorScada => {
                // operators authenticate to the HMI with the shared operator
                // account, then pull the process view
                let segment = self.hosts[&host].segment;
                let Some(hmi_host) = self
                    .hmis
                    .values()
                    .map(|h| h.host.clone())
                    .find(|h| self.hosts[h].segment == segment)
                else {
                    return Ok(());
                };
                let principal = self.scenario.campaign.hmi_credential.clone();
                let version = self.npcs.get(name).expect("npc exists").known_secret;
                let key = self.open_session(
                    &host,
                    &hmi_host,
                    Transport::Tcp,
                    8080,
                    SessionPurpose::NpcTraffic,
                );
                self.send_to_responder(
                    key,
                    Payload::Opaque(500),
                    AppData::AuthRequest {
                        principal,
                        secret_version: version,
                        channel: AuthChannel::Hmi,
                        install_implant: None,
                    },
                    npc_cause(),
                )?;
            }
        }
        Ok(())
    }

    fn pick_mail_peer(&mut self, sender: &str) -> String {
        let peers: Vec<String> = self.npcs.keys().filter(|n| *n != sender).cloned().collect();
        if peers.is_empty() {
            return sender.to_owned();
        }
        let idx = {
            let npc = self.npcs.get_mut(sender).expect("npc exists");
            npc.rng.range_usize(0, peers.len())
        };
        peers[idx].clone()
    }

    /// Submits a mail item from `from_host` to the mail server.
    pub fn deliver_mail(
        &mut self,
        from_host: &str,
        item: MailItem,
        cause: Cause,
    ) -> Result<super::DeliveryOutcome, WorldError> {
        let server = self.scenario.services.mail_host.clone();
        let size = item.body_bytes + item.attachment.as_ref().map(|_| 2400).unwrap_or(0);
        let key = self.open_session(
            &from_host.to_owned(),
            &server,
            Transport::Tcp,
            25,
            SessionPurpose::MailDelivery,
        );
        self.send_to_responder(key, Payload::Opaque(size), AppData::Mail(item), cause)
    }

    /// Mail server: append to the recipient mailbox; susceptible recipients
    /// open attachments after a short think-time.
    pub(super) fn serve_mail(
        &mut self,
        state: &SessionState,
        packet: &super::Packet,
        item: MailItem,
    ) -> Result<(), WorldError> {
        let _ = state;
        let recipient = item.to.clone();
        let has_attachment = item.attachment.is_some();
        let mailbox = self.mailboxes.entry(recipient.clone()).or_default();
        mailbox.push(item);
        let mailbox_idx = mailbox.len() - 1;

        if has_attachment {
            if let Some(npc) = self.npcs.get(&recipient) {
                if npc.role.susceptibility() == Susceptibility::ClicksPhish {
                    let delay = self.mail_delay();
                    self.queue.schedule_in(
                        delay,
                        EventKind::OpenMail { recipient, mailbox_idx },
                    )?;
                }
            }
        }
        self.send_to_initiator(packet.session, Payload::Opaque(80), AppData::Ack, packet.cause.clone())?;
        Ok(())
    }

    fn mail_delay(&mut self) -> u64 {
        self.mail_rng_mut().range_u64(60 * MICROS_PER_SEC, 300 * MICROS_PER_SEC)
    }

    pub(super) fn on_open_mail(
        &mut self,
        recipient: &str,
        mailbox_idx: usize,
    ) -> Result<(), WorldError> {
        let Some(item) = self
            .mailboxes
            .get(recipient)
            .and_then(|m| m.get(mailbox_idx))
            .cloned()
        else {
            return Ok(());
        };
        let Some(npc) = self.npcs.get(recipient) else {
            return Ok(());
        };
        let host = npc.host.clone();
        let susceptible = npc.role.susceptibility() == Susceptibility::ClicksPhish;
        let Some(attachment) = item.attachment else {
            return Ok(()); // nothing to execute
        };
        if !susceptible || !attachment.malicious {
            return Ok(()); // opened and ignored
        }
        // attachment executed: the process event inherits the mail's cause
        let cause = self.mail_cause_for(&item.from);
        self.emit_host_event(
            &host,
            EVENT_PROCESS_CREATION,
            &[
                ("process", attachment.filename.as_str()),
                ("parent", "outlook.exe"),
                ("user", recipient),
            ],
            &cause,
        )?;
        if let Some(implant) = attachment.implant {
            self.install_implant(&host, &implant, &cause)?;
        }
        Ok(())
    }

    // the phish cause is remembered by the campaign runner; benign mail
    // opens stay benign
    fn mail_cause_for(&self, from: &str) -> Cause {
        if let Some(runner) = self.campaign.as_ref() {
            if let Some(cause) = runner.phish_cause() {
                if from == runner.phish_sender() {
                    return Cause::Attack(cause.clone());
                }
            }
        }
        Cause::Benign(BenignKind::Npc)
    }

    fn mail_rng_mut(&mut self) -> &mut crate::kernel::SimRng {
        &mut self.mail_rng
    }

    // -----------------------------------------------------------------
    // authentication services
    // -----------------------------------------------------------------

    pub(super) fn serve_auth(
        &mut self,
        state: &SessionState,
        packet: &super::Packet,
    ) -> Result<(), WorldError> {
        let AppData::AuthRequest { principal, secret_version, channel, install_implant } =
            &packet.app
        else {
            return Ok(());
        };
        let responder = state.responder.clone();
        let host_domain = self.hosts[&responder].domain.clone();
        let outcome = authenticate(
            self.credentials.get(principal),
            *secret_version,
            host_domain.as_deref(),
        );
        let logon_type = match channel {
            AuthChannel::Rdp => "10",
            AuthChannel::Smb | AuthChannel::Dc => "3",
            AuthChannel::Hmi => "8",
        };
        match outcome {
            AuthOutcome::Success { privileged } => {
                self.emit_host_event(
                    &responder,
                    EVENT_LOGON_SUCCESS,
                    &[("user", principal.as_str()), ("logon_type", logon_type)],
                    &packet.cause,
                )?;
                if privileged {
                    self.emit_host_event(
                        &responder,
                        EVENT_SPECIAL_PRIVILEGE,
                        &[("user", principal.as_str())],
                        &packet.cause,
                    )?;
                }
                if *channel == AuthChannel::Smb {
                    self.emit_host_event(
                        &responder,
                        EVENT_SHARE_ACCESS,
                        &[("share", "ADMIN$"), ("user", principal.as_str())],
                        &packet.cause,
                    )?;
                }
                if let Some(implant) = install_implant {
                    if *channel == AuthChannel::Smb {
                        self.emit_host_event(
                            &responder,
                            EVENT_SERVICE_INSTALL,
                            &[("service", "WinSvcUpd"), ("user", principal.as_str())],
                            &packet.cause,
                        )?;
                    }
                    self.install_implant(&responder.clone(), &implant.clone(), &packet.cause.clone())?;
                }
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(200),
                    AppData::AuthResponse { success: true },
                    packet.cause.clone(),
                )?;
            }
            AuthOutcome::Failure => {
                self.emit_host_event(
                    &responder,
                    EVENT_LOGON_FAILURE,
                    &[("user", principal.as_str()), ("logon_type", logon_type)],
                    &packet.cause,
                )?;
                self.send_to_initiator(
                    packet.session,
                    Payload::Opaque(200),
                    AppData::AuthResponse { success: false },
                    packet.cause.clone(),
                )?;
            }
        }
        Ok(())
    }

    /// Domain-controller-side password reset for a service account. The
    /// rotation invalidates every logon that still presents the old secret.
    pub(super) fn serve_credential_rotate(
        &mut self,
        state: &SessionState,
        packet: &super::Packet,
    ) -> Result<(), WorldError> {
        let AppData::CredentialRotate { principal, admin, admin_version } = &packet.app else {
            return Ok(());
        };
        let responder = state.responder.clone();
        let host_domain = self.hosts[&responder].domain.clone();
        let admin_auth = authenticate(
            self.credentials.get(admin),
            *admin_version,
            host_domain.as_deref(),
        );
        let success = matches!(admin_auth, AuthOutcome::Success { .. });
        if success {
            self.emit_host_event(
                &responder,
                EVENT_LOGON_SUCCESS,
                &[("user", admin.as_str()), ("logon_type", "3")],
                &packet.cause,
            )?;
            self.emit_host_event(
                &responder,
                EVENT_SPECIAL_PRIVILEGE,
                &[("user", admin.as_str())],
                &packet.cause,
            )?;
            if let Some(cred) = self.credentials.get_mut(principal) {
                cred.secret_version += 1;
            }
            self.emit_host_event(
                &responder,
                EVENT_PROCESS_CREATION,
                &[("process", "net.exe"), ("args", "user password-reset")],
                &packet.cause,
            )?;
            let segment = self.hosts[&responder].segment;
            self.emit_operational(
                &responder.clone(),
                segment,
                "ops.credential_rotated".to_owned(),
                1.0,
                &packet.cause.clone(),
            )?;
        } else {
            self.emit_host_event(
                &responder,
                EVENT_LOGON_FAILURE,
                &[("user", admin.as_str()), ("logon_type", "3")],
                &packet.cause,
            )?;
        }
        self.send_to_initiator(
            packet.session,
            Payload::Opaque(200),
            AppData::AuthResponse { success },
            packet.cause.clone(),
        )?;
        Ok(())
    }
}
