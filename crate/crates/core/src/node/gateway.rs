use std::collections::{BTreeSet, VecDeque};

use super::{
    check_home, fnir_probes, heartbeat_frame, ms, Action, BusyReason, DropReason, Era, EventTag,
    Micros, NodeError, NodeProfile, NonceSource, TimingParams,
};
use crate::codec::{mask_to_nodes, Command, Frame, HomeId, NodeId, RouteHeader};

/// A smartphone-app command waiting for the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRequest {
    pub dst: NodeId,
    pub class: u8,
    pub cmd: u8,
    pub params: Vec<u8>,
}

impl AppRequest {
    fn frame(&self, home_id: HomeId, src: NodeId) -> Frame {
        Frame::singlecast(
            home_id,
            src,
            self.dst,
            Command::AppCommand {
                class: self.class,
                cmd: self.cmd,
                params: self.params.clone(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedApp {
    pub request: AppRequest,
    pub submitted_at: Micros,
    pub deadline: Micros,
}

/// One Nonce Report the gateway keeps trying to deliver.
///
/// A job owns the window `[starts_at, ends_at)`: a direct attempt at the
/// start, then `attempts_total` routed attempts spaced evenly across the
/// window. The job is retired at `ends_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteJob {
    pub dst: NodeId,
    pub report: Command,
    pub starts_at: Micros,
    pub ends_at: Micros,
    pub direct_sent: bool,
    pub attempts_total: u32,
    pub attempts_remaining: u32,
    pub next_attempt_at: Micros,
}

impl RouteJob {
    fn slot(&self) -> Micros {
        (self.ends_at - self.starts_at) / (self.attempts_total as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayState {
    pub id: NodeId,
    pub home_id: HomeId,
    pub busy_until: Option<Micros>,
    pub busy_reason: BusyReason,
    pub route_queue: VecDeque<RouteJob>,
    pub app_inbox: VecDeque<QueuedApp>,
    pub known_nodes: BTreeSet<NodeId>,
    /// Routing-capable neighbors, ascending.
    pub route_candidates: Vec<NodeId>,
    pub s2_seq_seen: Option<u8>,
}

impl GatewayState {
    pub fn new(
        id: NodeId,
        home_id: HomeId,
        known_nodes: BTreeSet<NodeId>,
        mut route_candidates: Vec<NodeId>,
    ) -> Self {
        route_candidates.sort_unstable();
        route_candidates.dedup();
        Self {
            id,
            home_id,
            busy_until: None,
            busy_reason: BusyReason::None,
            route_queue: VecDeque::new(),
            app_inbox: VecDeque::new(),
            known_nodes,
            route_candidates,
            s2_seq_seen: None,
        }
    }

    /// Busy intervals are half-open: the gateway is idle again at
    /// `busy_until` itself.
    pub fn is_busy(&self, now: Micros) -> bool {
        self.busy_until.is_some_and(|until| now < until)
    }

    fn clear_busy(&mut self) {
        self.busy_until = None;
        self.busy_reason = BusyReason::None;
    }

    /// Earliest time at which [`GatewayState::tick`] has work to do.
    pub fn next_deadline(&self) -> Option<Micros> {
        let route = self.route_queue.front().map(|job| job.next_attempt_at);
        let inbox = self.app_inbox.iter().map(|q| q.deadline).min();
        [route, self.busy_until, inbox].into_iter().flatten().min()
    }

    pub fn handle_frame(
        &mut self,
        profile: &NodeProfile,
        frame: &Frame,
        now: Micros,
        timing: &TimingParams,
        nonces: &mut NonceSource,
    ) -> Result<Vec<Action>, NodeError> {
        check_home(self.home_id, frame)?;
        if !frame.is_final_for(self.id) || frame.command == Command::Ack {
            return Ok(Vec::new());
        }
        if self.is_busy(now) {
            // The protocol layer still queues nonce replies behind an
            // ongoing routing job; everything else waits for the host.
            let queues_nonce =
                self.busy_reason == BusyReason::RoutingNonce && frame.command.is_nonce_request();
            if !queues_nonce {
                return Ok(vec![Action::drop(DropReason::GatewayBusy)]);
            }
        }
        let actions = match &frame.command {
            Command::NonceGet | Command::S2NonceGet { .. } => {
                self.handle_nonce_request(profile, frame, now, timing, nonces)
            }
            Command::FindNodesInRange { .. } if profile.patched => {
                vec![Action::drop(DropReason::NotInInclusion)]
            }
            Command::FindNodesInRange { mask } => self.execute_fnir(profile, mask, now, timing),
            Command::AppCommand { class, cmd, .. } if frame.src != self.id => vec![Action::EmitEvent {
                tag: EventTag::DeviceEvent,
                detail: format!("src={} class={class:02X} cmd={cmd:02X}", frame.src),
            }],
            // Includes Nonce Reports that come back to their own sender: the
            // gateway does not recognize them as its own.
            _ => Vec::new(),
        };
        Ok(actions)
    }

    fn handle_nonce_request(
        &mut self,
        profile: &NodeProfile,
        frame: &Frame,
        now: Micros,
        timing: &TimingParams,
        nonces: &mut NonceSource,
    ) -> Vec<Action> {
        if frame.is_multicast() {
            return vec![Action::drop(DropReason::Multicast)];
        }
        let src = frame.src;
        let to_self = src == self.id;
        let unknown = !self.known_nodes.contains(&src);
        if profile.patched && (to_self || unknown) {
            return vec![Action::drop(DropReason::SelfOrUnknownDestination)];
        }
        let needs_route = to_self || (unknown && profile.routes_to_unknown);
        if self.is_busy(now) && !needs_route {
            return vec![Action::drop(DropReason::GatewayBusy)];
        }
        let report = match frame.command {
            Command::S2NonceGet { seq } => {
                if self.s2_seq_seen == Some(seq) {
                    return vec![Action::drop(DropReason::DuplicateS2Sequence)];
                }
                self.s2_seq_seen = Some(seq);
                Command::S2NonceReport {
                    seq,
                    nonce: nonces.s2(now),
                }
            }
            _ => Command::NonceReport {
                nonce: nonces.s0(now),
            },
        };
        // Routing only starts when some neighbor can repeat the frame.
        if needs_route && !self.route_candidates.is_empty() {
            self.enqueue_route_job(src, report, now, timing)
        } else {
            let reply = Frame::singlecast(self.home_id, self.id, src, report);
            vec![Action::transmit(reply, now + ms(timing.turnaround_ms))]
        }
    }

    fn enqueue_route_job(
        &mut self,
        dst: NodeId,
        report: Command,
        now: Micros,
        timing: &TimingParams,
    ) -> Vec<Action> {
        let starts_at = self.route_queue.back().map_or(now, |job| job.ends_at.max(now));
        let ends_at = starts_at + ms(timing.route_retry_budget_ms);
        self.route_queue.push_back(RouteJob {
            dst,
            report,
            starts_at,
            ends_at,
            direct_sent: false,
            attempts_total: timing.route_attempts,
            attempts_remaining: timing.route_attempts,
            next_attempt_at: starts_at,
        });
        self.busy_until = Some(ends_at);
        self.busy_reason = BusyReason::RoutingNonce;
        let mut actions = vec![Action::SetBusy {
            until: ends_at,
            reason: BusyReason::RoutingNonce,
        }];
        actions.extend(self.route_step(now, timing));
        actions
    }

    /// Serves every routing job attempt that is due at `now`, FIFO.
    pub fn route_step(&mut self, now: Micros, _timing: &TimingParams) -> Vec<Action> {
        let mut actions = Vec::new();
        while let Some(job) = self.route_queue.front_mut() {
            if job.next_attempt_at > now {
                break;
            }
            let base = Frame::singlecast(self.home_id, self.id, job.dst, job.report.clone());
            if !job.direct_sent {
                job.direct_sent = true;
                job.next_attempt_at = if job.attempts_total > 0 {
                    job.starts_at + job.slot()
                } else {
                    job.ends_at
                };
                actions.push(Action::transmit(base, now));
            } else if job.attempts_remaining > 0 && !self.route_candidates.is_empty() {
                let done = job.attempts_total - job.attempts_remaining;
                let repeater = self.route_candidates[done as usize % self.route_candidates.len()];
                job.attempts_remaining -= 1;
                job.next_attempt_at = if job.attempts_remaining > 0 {
                    job.starts_at + job.slot() * (done as u64 + 2)
                } else {
                    job.ends_at
                };
                actions.push(Action::transmit(base.routed_via(RouteHeader::via(repeater)), now));
            } else if now >= job.ends_at {
                self.route_queue.pop_front();
                // A sweep may have started in the instant the last job ended.
                if self.route_queue.is_empty() && self.busy_reason == BusyReason::RoutingNonce {
                    self.clear_busy();
                }
            } else {
                job.next_attempt_at = job.ends_at;
            }
        }
        actions
    }

    /// Runs a Find Nodes In Range sweep: NOP Power to every masked node,
    /// `fnir_passes` times, blocking the gateway until the sweep ends.
    pub fn execute_fnir(
        &mut self,
        profile: &NodeProfile,
        mask: &[u8],
        now: Micros,
        timing: &TimingParams,
    ) -> Vec<Action> {
        let targets = match mask_to_nodes(mask) {
            Ok(nodes) if !nodes.is_empty() => nodes,
            _ => return Vec::new(),
        };
        let (mut actions, end) = fnir_probes(
            self.home_id,
            self.id,
            &targets,
            timing.fnir_passes,
            now,
            timing.nop_wait_ms,
        );
        self.busy_until = Some(end);
        self.busy_reason = BusyReason::FnirSweep;
        actions.push(Action::SetBusy {
            until: end,
            reason: BusyReason::FnirSweep,
        });
        if profile.era == Era::LegacyS0 {
            let done = Frame::broadcast(self.home_id, self.id, Command::CommandComplete);
            actions.push(Action::transmit(done, end));
        }
        actions
    }

    pub fn enqueue_app_command(&mut self, request: AppRequest, now: Micros, timing: &TimingParams) -> Vec<Action> {
        self.app_inbox.push_back(QueuedApp {
            request,
            submitted_at: now,
            deadline: now + ms(timing.app_timeout_ms),
        });
        self.tick(now, timing)
    }

    /// Advances timers: routing attempts, end of busy periods, app inbox
    /// processing and expiry.
    pub fn tick(&mut self, now: Micros, timing: &TimingParams) -> Vec<Action> {
        let mut actions = self.route_step(now, timing);
        if self.route_queue.is_empty() && self.busy_until.is_some_and(|until| now >= until) {
            self.clear_busy();
        }
        if !self.is_busy(now) {
            for queued in self.app_inbox.drain(..) {
                let request = &queued.request;
                actions.push(Action::EmitEvent {
                    tag: EventTag::AppProcessed,
                    detail: format!("dst={} class={:02X} cmd={:02X}", request.dst, request.class, request.cmd),
                });
                if request.dst != self.id && request.dst.is_addressable() {
                    actions.push(Action::transmit(request.frame(self.home_id, self.id), now));
                }
            }
        } else {
            let (expired, waiting) = self.app_inbox.drain(..).partition(|q| q.deadline <= now);
            self.app_inbox = waiting;
            actions.extend(expired.into_iter().map(|q: QueuedApp| Action::EmitEvent {
                tag: EventTag::AppBlocked,
                detail: format!(
                    "dst={} class={:02X} cmd={:02X} waited={}ms",
                    q.request.dst,
                    q.request.class,
                    q.request.cmd,
                    (now - q.submitted_at) / 1_000
                ),
            }));
        }
        actions
    }

    /// Broadcasts a heartbeat unless the gateway is blocked.
    pub fn heartbeat(&self, now: Micros) -> Vec<Action> {
        if self.is_busy(now) {
            Vec::new()
        } else {
            vec![Action::transmit(heartbeat_frame(self.home_id, self.id), now)]
        }
    }
}
