//! In-process message passing along the vehicle chain.
//!
//! Every hop takes one step. Each vehicle broadcasts its own state to its
//! direct neighbors and forwards what it receives to its other neighbor, so
//! in the three-vehicle chain the ends see each other's states two steps
//! late, via the middle vehicle.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::SubsystemPartition;
use crate::runtime::vehicle::{vehicle_step, VehicleController, VehicleInbox};
use crate::runtime::Realization;
use crate::synthesis::DelayedGains;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    /// Vehicle that put the message on the link (the origin or a relay).
    pub sender: usize,
    /// Vehicle whose state this is.
    pub origin: usize,
    pub receiver: usize,
    pub payload: DVector<f64>,
    /// Step at which the payload was measured.
    pub origin_step: usize,
    pub send_step: usize,
    pub delivery_step: usize,
}

/// Drop the state `x_origin(origin_step)` on its way to `receiver`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Withhold {
    pub receiver: usize,
    pub origin: usize,
    pub origin_step: usize,
}

/// Lossless fixed-delay links between chain neighbors.
#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    count: usize,
    in_flight: Vec<Message>,
    withheld: Vec<Withhold>,
}

impl MessageBus {
    pub fn new(count: usize) -> Self {
        Self { count, in_flight: Vec::new(), withheld: Vec::new() }
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        [i.checked_sub(1), Some(i + 1)].into_iter().flatten().filter(move |&j| j < self.count)
    }

    /// Test hook: suppress one delivery.
    pub fn withhold(&mut self, rule: Withhold) {
        self.withheld.push(rule);
    }

    /// Send `x_origin(step)` to the direct neighbors.
    pub fn publish(&mut self, origin: usize, payload: &DVector<f64>, step: usize) {
        let receivers: Vec<usize> = self.neighbors(origin).collect();
        for receiver in receivers {
            self.in_flight.push(Message {
                sender: origin,
                origin,
                receiver,
                payload: payload.clone(),
                origin_step: step,
                send_step: step,
                delivery_step: step + 1,
            });
        }
    }

    /// Hand out everything due at `step` and queue the relays.
    pub fn deliver(&mut self, step: usize) -> Vec<Message> {
        let (due, pending): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|msg| msg.delivery_step <= step);
        self.in_flight = pending;
        let mut delivered = Vec::with_capacity(due.len());
        for msg in due {
            let rule = Withhold { receiver: msg.receiver, origin: msg.origin, origin_step: msg.origin_step };
            if self.withheld.contains(&rule) {
                continue;
            }
            let forward: Vec<usize> = self
                .neighbors(msg.receiver)
                .filter(|&j| j != msg.sender && j != msg.origin)
                .collect();
            for receiver in forward {
                self.in_flight.push(Message {
                    sender: msg.receiver,
                    receiver,
                    send_step: step,
                    delivery_step: step + 1,
                    ..msg.clone()
                });
            }
            delivered.push(msg);
        }
        delivered
    }
}

/// All vehicles plus the bus, advanced one synchronous round per step.
#[derive(Debug, Clone)]
pub struct DistributedPlatoon {
    partition: SubsystemPartition,
    vehicles: Vec<VehicleController>,
    bus: MessageBus,
    mailboxes: Vec<HashMap<(usize, usize), DVector<f64>>>,
    own_history: Vec<Vec<DVector<f64>>>,
    offsets: Vec<DVector<f64>>,
    k: usize,
}

impl DistributedPlatoon {
    pub fn new(
        realization: Realization,
        gains: &DelayedGains,
        partition: &SubsystemPartition,
    ) -> Result<Self> {
        let count = partition.len();
        if count > 3 {
            return Err(Error::UnsupportedStructure(format!(
                "a chain of {count} vehicles cannot share x(k-2) through one-step hops"
            )));
        }
        let vehicles = (0..count)
            .map(|i| VehicleController::new(i, realization.clone(), partition, &gains.mask_m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition: partition.clone(),
            vehicles,
            bus: MessageBus::new(count),
            mailboxes: vec![HashMap::new(); count],
            own_history: vec![Vec::new(); count],
            offsets: Vec::new(),
            k: 0,
        })
    }

    pub fn vehicles(&self) -> &[VehicleController] {
        &self.vehicles
    }

    pub fn bus_mut(&mut self) -> &mut MessageBus {
        &mut self.bus
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    /// Whether all vehicles hold bit-identical copies of `x(0:k-2)`.
    pub fn common_histories_agree(&self) -> bool {
        let first = self.vehicles[0].common_history();
        self.vehicles.iter().all(|v| v.common_history() == first)
    }

    fn inbox(&self, i: usize, x: &DVector<f64>) -> VehicleInbox {
        let k = self.k;
        let p = &self.partition;
        let rows = p.state_range(i);
        let mailbox = &self.mailboxes[i];
        let mut neighbor_prev = BTreeMap::new();
        if k >= 1 {
            for j in p.neighbors(i) {
                if let Some(v) = mailbox.get(&(j, k - 1)) {
                    neighbor_prev.insert(j, v.clone());
                }
            }
        }
        let common = (k >= 2)
            .then(|| {
                let mut full = DVector::zeros(p.n());
                for j in 0..p.len() {
                    let rj = p.state_range(j);
                    let part = if j == i {
                        self.own_history[i].get(k - 2)
                    } else {
                        mailbox.get(&(j, k - 2))
                    }?;
                    full.rows_mut(rj.start, rj.len()).copy_from(part);
                }
                Some(full)
            })
            .flatten();
        VehicleInbox {
            vehicle: i,
            step: k,
            own_state: x.rows(rows.start, rows.len()).clone_owned(),
            neighbor_prev,
            common,
        }
    }

    /// One synchronous round: deliver, compute every `u_i(k)`, publish `x_i(k)`.
    pub fn step(&mut self, x: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.partition.clone();
        if x.len() != p.n() || c.len() != p.n() {
            return Err(Error::Dimension {
                context: "platoon state",
                expected: format!("{}", p.n()),
                got: format!("{}/{}", x.len(), c.len()),
            });
        }
        let k = self.k;
        for msg in self.bus.deliver(k) {
            self.mailboxes[msg.receiver].insert((msg.origin, msg.origin_step), msg.payload);
        }
        let mut u = DVector::zeros(p.m());
        for i in 0..p.len() {
            let inbox = self.inbox(i, x);
            let u_i = vehicle_step(&mut self.vehicles[i], &inbox, &self.offsets)?;
            let ri = p.input_range(i);
            u.rows_mut(ri.start, ri.len()).copy_from(&u_i);
        }
        for i in 0..p.len() {
            let rows = p.state_range(i);
            let own = x.rows(rows.start, rows.len()).clone_owned();
            self.bus.publish(i, &own, k);
            self.own_history[i].push(own);
            // x(k-2) is in the common history by now
            self.mailboxes[i].retain(|&(_, s), _| s + 1 >= k);
        }
        self.offsets.push(c.clone());
        self.k += 1;
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_hop_takes_one_step_and_relay_two() {
        let mut bus = MessageBus::new(3);
        bus.publish(2, &DVector::from_element(2, 3.0), 5);
        bus.publish(1, &DVector::from_element(2, 2.0), 5);
        assert!(bus.deliver(5).is_empty());
        let first = bus.deliver(6);
        let mut got: Vec<(usize, usize)> = first.iter().map(|m| (m.origin, m.receiver)).collect();
        got.sort();
        assert_eq!(got, vec![(1, 0), (1, 2), (2, 1)]);
        let second = bus.deliver(7);
        assert_eq!(second.len(), 1);
        let relayed = &second[0];
        assert_eq!((relayed.origin, relayed.sender, relayed.receiver), (2, 1, 0));
        assert_eq!(relayed.origin_step, 5);
        assert_eq!(relayed.delivery_step, 7);
        assert_eq!(relayed.payload, DVector::from_element(2, 3.0));
        assert!(bus.deliver(8).is_empty());
    }

    #[test]
    fn withheld_message_is_not_delivered_or_relayed() {
        let mut bus = MessageBus::new(3);
        bus.withhold(Withhold { receiver: 1, origin: 0, origin_step: 0 });
        bus.publish(0, &DVector::from_element(1, 1.0), 0);
        assert!(bus.deliver(1).is_empty());
        assert!(bus.deliver(2).is_empty());
    }
}
