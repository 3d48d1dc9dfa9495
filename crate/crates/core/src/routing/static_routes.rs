use std::any::Any;
use std::net::Ipv4Addr;

use super::{ControlMessage, RouteTable, RoutingPlugin};
use crate::sim::SimTime;

/// Fixed routes, returned verbatim while running. Sends no control traffic.
#[derive(Clone, Debug, Default)]
pub struct StaticRouting {
    table: RouteTable,
    running: bool,
}

impl StaticRouting {
    pub fn new(table: RouteTable) -> Self {
        StaticRouting { table, running: false }
    }
}

impl RoutingPlugin for StaticRouting {
    fn protocol(&self) -> &str {
        "static"
    }

    fn start(&mut self, _now: SimTime) -> Vec<ControlMessage> {
        self.running = true;
        Vec::new()
    }

    fn stop(&mut self) {
        self.running = false;
    }

    fn is_running(&self) -> bool {
        self.running
    }

    fn on_control_packet(&mut self, _msg: &ControlMessage, _from: Ipv4Addr, _now: SimTime) -> Vec<ControlMessage> {
        Vec::new()
    }

    fn tick(&mut self, _now: SimTime) -> Vec<ControlMessage> {
        Vec::new()
    }

    fn next_deadline(&self) -> Option<SimTime> {
        None
    }

    fn routes(&self) -> RouteTable {
        if self.running {
            self.table.clone()
        } else {
            RouteTable::new()
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
