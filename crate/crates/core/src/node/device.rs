use super::{
    check_home, fnir_probes, heartbeat_frame, ms, Action, DropReason, Micros, NodeError, NodeProfile,
    NonceSource, TimingParams,
};
use crate::codec::{mask_to_nodes, Command, Frame, HeaderType, HomeId, NodeId};

/// An end device or repeater. Devices acknowledge singlecast frames,
/// answer nonce requests, repeat routed frames when routing capable and
/// run Find Nodes In Range only while being included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceState {
    pub id: NodeId,
    pub home_id: HomeId,
    pub sweep_until: Option<Micros>,
}

impl DeviceState {
    pub fn new(id: NodeId, home_id: HomeId) -> Self {
        Self {
            id,
            home_id,
            sweep_until: None,
        }
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
        if let Some(route) = &frame.route {
            if route.next_repeater() == Some(self.id) {
                if !profile.routing_capable {
                    return Ok(Vec::new());
                }
                let mut forwarded = frame.clone();
                forwarded.route = Some(route.advanced());
                return Ok(vec![Action::transmit(forwarded, now + ms(timing.hop_ms))]);
            }
        }
        if !frame.is_final_for(self.id) || frame.src == self.id {
            return Ok(Vec::new());
        }

        let turnaround = ms(timing.turnaround_ms);
        let mut actions = Vec::new();
        let wants_ack = frame.ctrl.ack_requested
            && frame.ctrl.header_type == HeaderType::Singlecast
            && !frame.dst.is_broadcast();
        if wants_ack {
            let ack = Frame::ack(self.home_id, self.id, frame.src, frame.ctrl.seq);
            actions.push(Action::transmit(ack, now + turnaround));
        }

        match &frame.command {
            Command::NonceGet | Command::S2NonceGet { .. } if frame.is_multicast() => {
                actions.push(Action::drop(DropReason::Multicast));
            }
            Command::NonceGet => {
                let report = Command::NonceReport { nonce: nonces.s0(now) };
                let reply = Frame::singlecast(self.home_id, self.id, frame.src, report);
                actions.push(Action::transmit(reply, now + 2 * turnaround));
            }
            Command::S2NonceGet { seq } => {
                let report = Command::S2NonceReport {
                    seq: *seq,
                    nonce: nonces.s2(now),
                };
                let reply = Frame::singlecast(self.home_id, self.id, frame.src, report);
                actions.push(Action::transmit(reply, now + 2 * turnaround));
            }
            Command::FindNodesInRange { .. } if !profile.in_inclusion => {
                actions.push(Action::drop(DropReason::NotInInclusion));
            }
            Command::FindNodesInRange { mask } => {
                if self.sweep_until.is_some_and(|until| now < until) {
                    return Ok(actions);
                }
                let targets = mask_to_nodes(mask).unwrap_or_default();
                let (probes, end) =
                    fnir_probes(self.home_id, self.id, &targets, 1, now + turnaround, timing.nop_wait_ms);
                actions.extend(probes);
                self.sweep_until = Some(end);
                let done = Frame::singlecast(self.home_id, self.id, frame.src, Command::CommandComplete);
                actions.push(Action::transmit(done, end));
            }
            _ => {}
        }
        Ok(actions)
    }

    pub fn heartbeat(&self, now: Micros) -> Vec<Action> {
        vec![Action::transmit(heartbeat_frame(self.home_id, self.id), now)]
    }
}
